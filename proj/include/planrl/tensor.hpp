#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace planrl {

/// Dense row-major tensor. Float instantiation is the production dtype;
/// tests instantiate double to validate gradients against finite differences.
template <typename S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> shp) : shape(std::move(shp)) {
    data.assign(numel_of(shape), S(0));
  }
  TensorT(std::vector<int> shp, std::vector<S> values)
      : shape(std::move(shp)), data(std::move(values)) {
    assert(static_cast<size_t>(numel_of(shape)) == data.size());
  }

  static int64_t numel_of(const std::vector<int>& shp) {
    int64_t n = 1;
    for (int d : shp) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[i]; }
  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  void zero() { std::fill(data.begin(), data.end(), S(0)); }

  static TensorT zeros(std::vector<int> shp) { return TensorT(std::move(shp)); }
  static TensorT scalar(S v) { return TensorT({1}, {v}); }

  S item() const {
    assert(data.size() == 1);
    return data[0];
  }
};

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using VecMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>;
template <typename S>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>;

using Tensor = TensorT<float>;

}  // namespace planrl
