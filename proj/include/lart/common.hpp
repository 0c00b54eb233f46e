#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lart {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Scalar used by the training/evaluation pipeline. Gradient checks instantiate
// the same templates with double.
using Real = float;

// Base of all library errors. The CLI maps the subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

// 64-bit FNV-1a. Stable across platforms; used for config/dataset hashes and
// for deriving named random substreams.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

// Independent stream derived from (root seed, name). Streams with different
// names never share state.
Rng substream(std::uint64_t root, std::string_view name);
Rng substream(std::uint64_t root, std::string_view name, std::uint64_t index);

// Worker count: LART_THREADS when set, else the hardware concurrency.
int worker_threads();

// Calls fn(i) for i in [0, n) on up to worker_threads() threads. The first
// exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace lart
