#pragma once

#include "weft/collision.hpp"
#include "weft/physics.hpp"
#include "weft/response.hpp"
#include "weft/solver.hpp"

#include <memory>
#include <string>

namespace weft {

enum class Precision { Double, Single };

/// Kinematic obstacle: a triangle soup under keyframed rigid motion
/// (piecewise-linear translation and axis-angle rotation about a center).
struct Obstacle {
  TriSoup shape;
  struct Keyframe {
    double time = 0.0;
    Vec3 translate = Vec3::Zero();
    Vec3 axis = Vec3(0, 0, 1);
    double angle = 0.0;  // radians
    Vec3 center = Vec3::Zero();
  };
  std::vector<Keyframe> keyframes;

  std::vector<Vec3> positions_at(double t) const;
};

struct SimConfig {
  double dt = 1.0 / 150.0;
  int frames = 100;
  int devices = 1;
  Precision precision = Precision::Double;
  Vec3 gravity = Vec3(0, 0, -9.81);
  Vec3 wind = Vec3::Zero();
  MaterialParams material;
  CollisionParams collision;
  ContactParams contact;
  PcgConfig solver;
  ZoneSolveParams zones;
  double link_latency = 0.0;
  std::uint64_t seed = 0;
};

struct FrameReport {
  int frame = 0;
  double time = 0.0;
  double integrate_ms = 0.0;  // element build + assembly + PCG
  double broad_ms = 0.0;      // hash grid construction (DCD + CCD)
  double narrow_ms = 0.0;     // elementary tests + merge
  double zones_ms = 0.0;      // penetration handling
  int pcg_iterations = 0;
  double pcg_residual = 0.0;
  int proximities = 0;
  int contacts = 0;
  int impacts = 0;
  int zone_count = 0;
  int zone_outer = 0;
  bool committed = false;
  std::vector<std::string> stage_trace;
};

/// The canonical per-step stage order; instrumentation asserts against it.
const std::vector<std::string>& canonical_stage_order();

/// One cloth, a set of kinematic obstacles, one engine; step() advances the
/// committed state by dt and never commits a penetrating configuration.
class Simulator {
public:
  Simulator(ClothMesh mesh, std::vector<std::uint8_t> pinned, std::vector<Obstacle> obstacles,
            SimConfig config, std::ostream* instrument = nullptr);

  const SimState& state() const { return state_; }
  const ClothMesh& mesh() const { return mesh_; }
  const SimConfig& config() const { return config_; }
  Engine& engine() { return *engine_; }
  int frame() const { return frame_; }

  FrameReport step();

private:
  template <class Real>
  FrameReport step_impl();

  ClothMesh mesh_;
  std::vector<std::uint8_t> pinned_;
  std::vector<Obstacle> obstacles_;
  SimConfig config_;
  SimState state_;
  std::unique_ptr<Engine> engine_;
  ValidatedSchedule schedule_;
  CollisionSoup soup_;
  int frame_ = 0;
};

}  // namespace weft
