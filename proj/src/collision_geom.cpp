#include "weft/collision.hpp"

#include <cmath>

namespace weft {

namespace {

constexpr double kBaryEps = 1e-8;       // barycentric containment slack
constexpr double kRootClampEps = 1e-12; // roots this close to [0,1] are clamped in

double poly_eval(double c3, double c2, double c1, double c0, double t) {
  return ((c3 * t + c2) * t + c1) * t + c0;
}

// Bisection inside a bracket with a guaranteed sign change.
double bisect_root(double c3, double c2, double c1, double c0, double lo, double hi) {
  double flo = poly_eval(c3, c2, c1, c0, lo);
  for (int it = 0; it < 90; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = poly_eval(c3, c2, c1, c0, mid);
    if (fm == 0.0) return mid;
    if ((flo < 0.0) == (fm < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

int cubic_roots_in_unit_interval(double c3, double c2, double c1, double c0,
                                 std::array<double, 3>& roots) {
  // Scale-normalize the coefficients so the degenerate tests are relative.
  const double scale = std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
  if (scale == 0.0) return -1;  // identically zero: caller handles the coplanar-motion case
  c3 /= scale;
  c2 /= scale;
  c1 /= scale;
  c0 /= scale;

  // Breakpoints: interval ends plus the real critical points of the cubic.
  std::array<double, 4> bp{0.0, 1.0, 0.0, 0.0};
  int nbp = 2;
  const double qa = 3.0 * c3, qb = 2.0 * c2, qc = c1;
  if (std::abs(qa) > 1e-14) {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc > 0.0) {
      const double sq = std::sqrt(disc);
      // Numerically stable quadratic roots.
      const double q = -0.5 * (qb + (qb >= 0.0 ? sq : -sq));
      for (double t : {q / qa, qc / q}) {
        if (t > 0.0 && t < 1.0) bp[static_cast<std::size_t>(nbp++)] = t;
      }
    }
  } else if (std::abs(qb) > 1e-14) {
    const double t = -qc / qb;
    if (t > 0.0 && t < 1.0) bp[static_cast<std::size_t>(nbp++)] = t;
  }
  std::sort(bp.begin(), bp.begin() + nbp);

  int count = 0;
  for (int k = 0; k + 1 < nbp; ++k) {
    const double lo = bp[static_cast<std::size_t>(k)];
    const double hi = bp[static_cast<std::size_t>(k + 1)];
    if (hi - lo < 1e-15) continue;
    const double flo = poly_eval(c3, c2, c1, c0, lo);
    const double fhi = poly_eval(c3, c2, c1, c0, hi);
    double root = -1.0;
    if (flo == 0.0) {
      root = lo;
    } else if ((flo < 0.0) != (fhi <= 0.0)) {
      root = bisect_root(c3, c2, c1, c0, lo, hi);
    } else if (fhi == 0.0 && k + 2 == nbp) {
      root = hi;
    }
    if (root >= -kRootClampEps && root <= 1.0 + kRootClampEps) {
      root = std::min(1.0, std::max(0.0, root));
      if (count == 0 || std::abs(roots[static_cast<std::size_t>(count - 1)] - root) > 1e-14) {
        roots[static_cast<std::size_t>(count++)] = root;
      }
    }
  }
  return count;
}

std::optional<DcdHit> dcd_vertex_face(const Vec3& v, const Vec3& a, const Vec3& b, const Vec3& c,
                                      double h) {
  // Closest point on the triangle (Ericson, Real-Time Collision Detection).
  const Vec3 ab = b - a, ac = c - a, av = v - a;
  const double d1 = ab.dot(av), d2 = ac.dot(av);
  Vec3 cp;
  std::array<double, 3> bary{};
  if (d1 <= 0.0 && d2 <= 0.0) {
    cp = a;
    bary = {1, 0, 0};
  } else {
    const Vec3 bv = v - b;
    const double d3 = ab.dot(bv), d4 = ac.dot(bv);
    if (d3 >= 0.0 && d4 <= d3) {
      cp = b;
      bary = {0, 1, 0};
    } else {
      const double vc = d1 * d4 - d3 * d2;
      if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double w = d1 / (d1 - d3);
        cp = a + w * ab;
        bary = {1 - w, w, 0};
      } else {
        const Vec3 cv = v - c;
        const double d5 = ab.dot(cv), d6 = ac.dot(cv);
        if (d6 >= 0.0 && d5 <= d6) {
          cp = c;
          bary = {0, 0, 1};
        } else {
          const double vb = d5 * d2 - d1 * d6;
          if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
            const double w = d2 / (d2 - d6);
            cp = a + w * ac;
            bary = {1 - w, 0, w};
          } else {
            const double va = d3 * d6 - d5 * d4;
            if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
              const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
              cp = b + w * (c - b);
              bary = {0, 1 - w, w};
            } else {
              const double denom = 1.0 / (va + vb + vc);
              const double wb = vb * denom, wc = vc * denom;
              cp = a + ab * wb + ac * wc;
              bary = {1.0 - wb - wc, wb, wc};
            }
          }
        }
      }
    }
  }

  const Vec3 diff = v - cp;
  const double dist = diff.norm();
  if (dist >= h) return std::nullopt;
  DcdHit hit;
  hit.gap = dist;
  if (dist > 1e-12) {
    hit.normal = diff / dist;
  } else {
    Vec3 n = ab.cross(ac);
    const double len = n.norm();
    if (len > 1e-16) {
      hit.normal = n / len;
    } else {
      // fully degenerate face: any direction perpendicular to its longest edge
      const Vec3 d = ab.squaredNorm() > ac.squaredNorm() ? ab : ac;
      hit.normal = d.unitOrthogonal();
    }
  }
  hit.weights = {1.0, bary[0], bary[1], bary[2]};
  return hit;
}

std::optional<DcdHit> dcd_edge_edge(const Vec3& p1, const Vec3& p2, const Vec3& q1, const Vec3& q2,
                                    double h) {
  const Vec3 d1 = p2 - p1, d2 = q2 - q1, r = p1 - q1;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-18 && e <= 1e-18) {
    // both segments degenerate to points
  } else if (a <= 1e-18) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-18) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 1e-18 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  const Vec3 cp = p1 + s * d1;
  const Vec3 cq = q1 + t * d2;
  const Vec3 diff = cp - cq;
  const double dist = diff.norm();
  if (dist >= h) return std::nullopt;
  DcdHit hit;
  hit.gap = dist;
  if (dist > 1e-12) {
    hit.normal = diff / dist;
  } else {
    Vec3 n = d1.cross(d2);
    const double len = n.norm();
    if (len > 1e-16) {
      hit.normal = n / len;
    } else {
      // parallel (or degenerate) edges: any direction perpendicular to them
      const Vec3 d = d1.squaredNorm() > d2.squaredNorm() ? d1 : d2;
      hit.normal = d.squaredNorm() > 1e-18 ? Vec3(d.unitOrthogonal()) : Vec3(1, 0, 0);
    }
  }
  hit.weights = {1.0 - s, s, 1.0 - t, t};
  return hit;
}

namespace {

// Coefficients of the scalar triple product (u0 + t du) x (v0 + t dv) . (w0 + t dw).
void triple_product_cubic(const Vec3& u0, const Vec3& du, const Vec3& v0, const Vec3& dv,
                          const Vec3& w0, const Vec3& dw, double& c3, double& c2, double& c1,
                          double& c0) {
  c0 = u0.cross(v0).dot(w0);
  c1 = du.cross(v0).dot(w0) + u0.cross(dv).dot(w0) + u0.cross(v0).dot(dw);
  c2 = du.cross(dv).dot(w0) + du.cross(v0).dot(dw) + u0.cross(dv).dot(dw);
  c3 = du.cross(dv).dot(dw);
}

Vec3 lerp(const Vec3& a, const Vec3& b, double t) { return a + t * (b - a); }

}  // namespace

std::optional<CcdHit> ccd_vertex_face(const Vec3& v0, const Vec3& v1, const Vec3& a0, const Vec3& a1,
                                      const Vec3& b0, const Vec3& b1, const Vec3& c0v,
                                      const Vec3& c1v) {
  const Vec3 u0 = b0 - a0, du = (b1 - a1) - u0;
  const Vec3 w0 = c0v - a0, dw = (c1v - a1) - w0;
  const Vec3 q0 = v0 - a0, dq = (v1 - a1) - q0;
  double c3, c2, c1, c0;
  triple_product_cubic(u0, du, w0, dw, q0, dq, c3, c2, c1, c0);

  std::array<double, 3> roots{};
  int count = cubic_roots_in_unit_interval(c3, c2, c1, c0, roots);
  if (count < 0) {
    // Identically coplanar motion: fall back to sampling the interval.
    roots = {0.0, 0.5, 1.0};
    count = 3;
  }

  for (int k = 0; k < count; ++k) {
    const double t = roots[static_cast<std::size_t>(k)];
    const Vec3 v = lerp(v0, v1, t), a = lerp(a0, a1, t), b = lerp(b0, b1, t), c = lerp(c0v, c1v, t);
    const auto hit = dcd_vertex_face(v, a, b, c, 1e100);
    if (!hit) continue;
    // The closest-point weights are clamped to the face, so a coplanar
    // vertex outside the face shows up as in-plane distance here.
    const double scale = std::max({(b - a).norm(), (c - a).norm(), 1e-12});
    if (hit->gap > 1e-9 * scale) continue;

    CcdHit out;
    out.toi = t;
    Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    n = len > 1e-16 ? Vec3(n / len) : hit->normal;
    // Orient from the face toward the vertex side at the start of the step.
    const Vec3 cp0 = hit->weights[1] * a0 + hit->weights[2] * b0 + hit->weights[3] * c0v;
    if (n.dot(v0 - cp0) < 0.0) n = -n;
    out.normal = n;
    out.weights = hit->weights;
    return out;
  }
  return std::nullopt;
}

std::optional<CcdHit> ccd_edge_edge(const Vec3& p10, const Vec3& p11, const Vec3& p20,
                                    const Vec3& p21, const Vec3& q10, const Vec3& q11,
                                    const Vec3& q20, const Vec3& q21) {
  const Vec3 u0 = p20 - p10, du = (p21 - p11) - u0;
  const Vec3 v0 = q20 - q10, dv = (q21 - q11) - v0;
  const Vec3 w0 = q10 - p10, dw = (q11 - p11) - w0;
  double c3, c2, c1, c0;
  triple_product_cubic(u0, du, v0, dv, w0, dw, c3, c2, c1, c0);

  std::array<double, 3> roots{};
  int count = cubic_roots_in_unit_interval(c3, c2, c1, c0, roots);
  if (count < 0) {
    roots = {0.0, 0.5, 1.0};
    count = 3;
  }

  for (int k = 0; k < count; ++k) {
    const double t = roots[static_cast<std::size_t>(k)];
    const Vec3 p1 = lerp(p10, p11, t), p2 = lerp(p20, p21, t);
    const Vec3 q1 = lerp(q10, q11, t), q2 = lerp(q20, q21, t);
    const auto hit = dcd_edge_edge(p1, p2, q1, q2, 1e100);
    if (!hit) continue;
    const double scale = std::max({(p2 - p1).norm(), (q2 - q1).norm(), 1e-12});
    if (hit->gap > 1e-9 * scale) continue;  // coplanar but not crossing
    const double s = hit->weights[1], u = hit->weights[3];
    if (s < -kBaryEps || s > 1.0 + kBaryEps || u < -kBaryEps || u > 1.0 + kBaryEps) continue;

    CcdHit out;
    out.toi = t;
    Vec3 n = (p2 - p1).cross(q2 - q1);
    double len = n.norm();
    if (len < 1e-16) {
      n = hit->normal;
    } else {
      n /= len;
    }
    const Vec3 cp0 = (1.0 - s) * p10 + s * p20;
    const Vec3 cq0 = (1.0 - u) * q10 + u * q20;
    if (n.dot(cp0 - cq0) < 0.0) n = -n;
    out.normal = n;
    out.weights = hit->weights;
    return out;
  }
  return std::nullopt;
}

}  // namespace weft
