#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace splatgrasp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

using Index = std::size_t;
using IndexSet = std::vector<Index>;

/// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorKind {
  Precondition,  ///< caller violated an input contract (exit code 2)
  Numerical,     ///< optimisation or estimation broke down (exit code 3)
  Io,            ///< unreadable or malformed file (exit code 2)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void throw_precondition(const std::string& what);
[[noreturn]] void throw_numerical(const std::string& what);
[[noreturn]] void throw_io(const std::string& what);

/// Non-fatal diagnostics go to stderr unless silenced (tests silence them).
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);

/// Worker count used by the pixel-parallel loops. Results never depend on it.
void set_thread_count(int threads);
int thread_count();

}  // namespace splatgrasp
