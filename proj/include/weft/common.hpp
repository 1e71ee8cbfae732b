#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace weft {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Base class for all engine errors; subclasses carry context in the message.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid interconnect description (e.g. non-power-of-two device count).
class TopologyError : public Error {
public:
  using Error::Error;
};

/// A transfer schedule that cannot be replayed legally.
class ScheduleError : public Error {
public:
  using Error::Error;
};

/// Failure inside a device worker (panic, watchdog timeout, divergence).
class ExecError : public Error {
public:
  using Error::Error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class SceneError : public Error {
public:
  using Error::Error;
};

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace weft
