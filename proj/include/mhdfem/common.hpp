#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace mhdfem {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Malformed input file (tetgen headers, config files). Message names the line
/// or key that failed.
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Input is well-formed but outside what this code supports
/// (dimension != 3, quadrature degree too high, non-axis-aligned boundary, ...).
class UnsupportedError : public std::runtime_error {
public:
  explicit UnsupportedError(const std::string& what) : std::runtime_error(what) {}
};

/// Internally inconsistent data: dangling indices, non-conforming faces,
/// mismatched block sizes.
class ConsistencyError : public std::runtime_error {
public:
  explicit ConsistencyError(const std::string& what) : std::runtime_error(what) {}
};

/// Geometrically degenerate element (vanishing volume or inradius).
class DegenerateElementError : public std::runtime_error {
public:
  explicit DegenerateElementError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid run configuration; message names the offending field.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Linear solver breakdown (singular factorization).
class SolverError : public std::runtime_error {
public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mhdfem
