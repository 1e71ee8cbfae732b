#pragma once

#include "weft/sparse.hpp"

#include <cmath>
#include <sstream>

namespace weft {

class SolverError : public Error {
public:
  using Error::Error;
};

enum class Preconditioner { None, BlockJacobi };

struct PcgConfig {
  double rel_tolerance = 1e-4;  // on ||r|| / ||b||
  int max_iterations = 400;
  Preconditioner preconditioner = Preconditioner::BlockJacobi;
};

struct PcgReport {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;       // ||r|| / ||b|| per iteration
  std::vector<double> precond_norm_history;   // sqrt(<r, M^-1 r>) per iteration
};

/// Distributed preconditioned conjugate gradient. Vector operations touch
/// only device-owned slices, dot products reduce deterministically in
/// device order, and the matrix product is the pipelined SpMV, so repeated
/// runs are bitwise identical. Throws SolverError if NaN/Inf appears or the
/// matrix is found to be non-SPD; non-convergence is only flagged.
template <class Real>
PcgReport pcg_solve(Engine& engine, const PartitionedMatrix<Real>& a, const ValidatedSchedule& sched,
                    const DistVector<Real>& b, DistVector<Real>& x, const PcgConfig& config) {
  const int n = a.devices;
  if (engine.devices() != n) throw DimensionError("pcg_solve: engine/matrix device count mismatch");
  const auto& parts = a.partitions;

  DistVector<Real> r(&engine, parts), z(&engine, parts), p(&engine, parts), q(&engine, parts);
  SpmvWorkspace<Real> ws(n, a.padded_len);
  std::vector<double> partials(static_cast<std::size_t>(n), 0.0);

  // Per-device inverted 3x3 diagonal blocks for the block-Jacobi preconditioner.
  std::vector<std::vector<Mat3>> diag_inv(static_cast<std::size_t>(n));
  if (config.preconditioner == Preconditioner::BlockJacobi) {
    engine.parallel([&](int d) {
      const auto& block = a.block(d, d);
      auto& inv = diag_inv[static_cast<std::size_t>(d)];
      inv.resize(static_cast<std::size_t>(block.block_rows()));
      for (int row = 0; row < block.block_rows(); ++row) {
        const int slot = block.find_slot(row, row);
        Mat3 m = Mat3::Identity();
        if (slot >= 0) {
          for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) m(i, j) = static_cast<double>(block.value_at(row, slot, i, j));
          }
        }
        inv[static_cast<std::size_t>(row)] = m.inverse();
      }
    });
  }

  auto apply_precond = [&](const DistVector<Real>& in, DistVector<Real>& out) {
    if (config.preconditioner == Preconditioner::None) {
      engine.parallel([&](int d) {
        auto src = in.local(d);
        auto dst = out.local(d);
        std::copy(src.begin(), src.end(), dst.begin());
      });
      return;
    }
    engine.parallel([&](int d) {
      auto src = in.local(d);
      auto dst = out.local(d);
      const auto& inv = diag_inv[static_cast<std::size_t>(d)];
      for (std::size_t row = 0; row < inv.size(); ++row) {
        const Mat3& m = inv[row];
        for (int i = 0; i < 3; ++i) {
          double acc = 0.0;
          for (int j = 0; j < 3; ++j) acc += m(i, j) * static_cast<double>(src[3 * row + static_cast<std::size_t>(j)]);
          dst[3 * row + static_cast<std::size_t>(i)] = static_cast<Real>(acc);
        }
      }
    });
  };

  auto dot = [&](const DistVector<Real>& u, const DistVector<Real>& v) {
    engine.parallel([&](int d) {
      auto us = u.local(d);
      auto vs = v.local(d);
      double acc = 0.0;
      for (std::size_t i = 0; i < us.size(); ++i) acc += static_cast<double>(us[i]) * static_cast<double>(vs[i]);
      partials[static_cast<std::size_t>(d)] = acc;
    });
    return engine.all_reduce_sum(partials);
  };

  const double b_norm = std::sqrt(dot(b, b));
  x.fill(Real(0));
  PcgReport report;
  if (b_norm == 0.0) {
    report.converged = true;
    return report;
  }

  engine.parallel([&](int d) {
    auto bs = b.local(d);
    auto rs = r.local(d);
    std::copy(bs.begin(), bs.end(), rs.begin());
  });
  apply_precond(r, z);
  engine.parallel([&](int d) {
    auto zs = z.local(d);
    auto ps = p.local(d);
    std::copy(zs.begin(), zs.end(), ps.begin());
  });
  double rho = dot(r, z);

  const double tol = config.rel_tolerance * b_norm;
  double r_norm = b_norm;
  for (int it = 1; it <= config.max_iterations; ++it) {
    spmv_pipelined(engine, a, sched, p, q, ws);
    const double pq = dot(p, q);
    if (!std::isfinite(pq)) {
      throw SolverError("pcg: non-finite curvature at iteration " + std::to_string(it));
    }
    if (pq <= 0.0) {
      throw SolverError("pcg: non-positive curvature at iteration " + std::to_string(it) +
                        " (matrix not SPD)");
    }
    const double alpha = rho / pq;
    engine.parallel([&](int d) {
      auto xs = x.local(d);
      auto ps = p.local(d);
      auto rs = r.local(d);
      auto qs = q.local(d);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] += static_cast<Real>(alpha) * ps[i];
        rs[i] -= static_cast<Real>(alpha) * qs[i];
      }
    });

    r_norm = std::sqrt(dot(r, r));
    if (!std::isfinite(r_norm)) {
      throw SolverError("pcg: divergence (non-finite residual) at iteration " + std::to_string(it));
    }
    report.iterations = it;
    report.residual_history.push_back(r_norm / b_norm);

    apply_precond(r, z);
    const double rho_next = dot(r, z);
    report.precond_norm_history.push_back(std::sqrt(std::max(0.0, rho_next)));
    if (r_norm <= tol) {
      report.converged = true;
      break;
    }
    const double beta = rho_next / rho;
    rho = rho_next;
    engine.parallel([&](int d) {
      auto zs = z.local(d);
      auto ps = p.local(d);
      for (std::size_t i = 0; i < ps.size(); ++i) ps[i] = zs[i] + static_cast<Real>(beta) * ps[i];
    });
  }

  report.rel_residual = r_norm / b_norm;
  if (engine.options().instrument != nullptr) {
    std::ostringstream os;
    os << "event=pcg iterations=" << report.iterations << " rel_residual=" << report.rel_residual
       << " converged=" << (report.converged ? 1 : 0);
    engine.log_line(os.str());
  }
  return report;
}

}  // namespace weft
