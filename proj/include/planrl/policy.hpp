#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "planrl/autodiff.hpp"
#include "planrl/rng.hpp"
#include "planrl/special_math.hpp"
#include "planrl/tensor.hpp"

namespace planrl {

struct PolicyConfig {
  int raster_channels = 10;
  int raster_h = 128;
  int raster_w = 128;
  int meas_dim = 4;
  int extras_dim = 5;

  struct Conv {
    int out_ch, kernel, stride;
  };
  std::vector<Conv> convs;
  int conv_fc = 96;
  int meas_hidden = 48;
  int trunk_hidden = 96;
  int head_hidden = 48;
  int action_dims = 2;

  /// ~150k parameters, 3 conv layers on the 128x128 desk raster. Fast enough
  /// to train on CPUs; the default for tests and smoke runs.
  static PolicyConfig desk(int channels = 10, int meas = 4) {
    PolicyConfig c;
    c.raster_channels = channels;
    c.raster_h = 128;
    c.raster_w = 128;
    c.meas_dim = meas;
    c.convs = {{8, 4, 4}, {16, 4, 2}, {24, 3, 2}};
    c.conv_fc = 96;
    c.meas_hidden = 48;
    c.trunk_hidden = 96;
    c.head_hidden = 48;
    return c;
  }

  /// ~2M parameters, 6 conv layers on the 256x256 raster.
  static PolicyConfig paper(int channels = 10, int meas = 4) {
    PolicyConfig c;
    c.raster_channels = channels;
    c.raster_h = 256;
    c.raster_w = 256;
    c.meas_dim = meas;
    c.convs = {{16, 5, 2}, {32, 3, 2}, {64, 3, 2}, {128, 3, 2}, {256, 3, 2}, {256, 3, 2}};
    c.conv_fc = 512;
    c.meas_hidden = 128;
    c.trunk_hidden = 512;
    c.head_hidden = 256;
    return c;
  }

  /// Minimal net for unit tests.
  static PolicyConfig micro(int channels = 1, int h = 8, int w = 8, int meas = 3) {
    PolicyConfig c;
    c.raster_channels = channels;
    c.raster_h = h;
    c.raster_w = w;
    c.meas_dim = meas;
    c.convs = {{4, 3, 2}};
    c.conv_fc = 16;
    c.meas_hidden = 8;
    c.trunk_hidden = 16;
    c.head_hidden = 8;
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["raster_channels"] = raster_channels;
    j["raster_h"] = raster_h;
    j["raster_w"] = raster_w;
    j["meas_dim"] = meas_dim;
    j["extras_dim"] = extras_dim;
    j["conv_fc"] = conv_fc;
    j["meas_hidden"] = meas_hidden;
    j["trunk_hidden"] = trunk_hidden;
    j["head_hidden"] = head_hidden;
    j["action_dims"] = action_dims;
    j["convs"] = nlohmann::json::array();
    for (const Conv& c : convs) j["convs"].push_back({c.out_ch, c.kernel, c.stride});
    return j;
  }

  static PolicyConfig from_json(const nlohmann::json& j) {
    PolicyConfig c;
    c.raster_channels = j.at("raster_channels");
    c.raster_h = j.at("raster_h");
    c.raster_w = j.at("raster_w");
    c.meas_dim = j.at("meas_dim");
    c.extras_dim = j.at("extras_dim");
    c.conv_fc = j.at("conv_fc");
    c.meas_hidden = j.at("meas_hidden");
    c.trunk_hidden = j.at("trunk_hidden");
    c.head_hidden = j.at("head_hidden");
    c.action_dims = j.at("action_dims");
    c.convs.clear();
    for (const auto& jc : j.at("convs")) c.convs.push_back({jc[0], jc[1], jc[2]});
    return c;
  }
};

namespace detail {

/// Orthogonal initialization (QR of a normal matrix, sign-corrected),
/// computed in double then cast.
template <typename S>
void orthogonal_init(TensorT<S>& w, int rows, int cols, double gain, RngStream& rng) {
  bool transposed = rows < cols;
  int m = std::max(rows, cols), n = std::min(rows, cols);
  Eigen::MatrixXd a(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, n);
  Eigen::MatrixXd r = qr.matrixQR().topRows(n).template triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double v = transposed ? q(j, i) : q(i, j);
      w.data[static_cast<size_t>(i) * cols + j] = static_cast<S>(gain * v);
    }
}

}  // namespace detail

/// Policy/value network: conv stack over the BEV raster, an MLP measurement
/// encoder, a fusion trunk, a Beta action head (alpha, beta >= 1 via
/// softplus + 1) and a value head that additionally consumes the critic
/// extras. Every pre-activation is layer-normalized before its ReLU.
template <typename S>
class PolicyNetT {
 public:
  struct Layer {
    int w = -1, b = -1, ln_g = -1, ln_b = -1;
  };

  explicit PolicyNetT(PolicyConfig cfg, RngStream init_rng = RngStream(0)) : cfg_(std::move(cfg)) {
    build(init_rng);
  }

  const PolicyConfig& config() const { return cfg_; }
  std::vector<TensorT<S>>& params() { return params_; }
  const std::vector<TensorT<S>>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return names_; }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
  }

  struct Output {
    std::vector<double> alpha, beta;
    double value = 0.0;
  };

  /// Inference forward (no tape). Raster values are expected in [0, 1].
  Output forward(const TensorT<S>& raster, const TensorT<S>& meas,
                 const TensorT<S>& extras) const {
    using namespace ops;
    TensorT<S> x = raster;
    for (size_t i = 0; i < conv_layers_.size(); ++i) {
      const Layer& L = conv_layers_[i];
      x = conv2d(x, params_[L.w], params_[L.b], cfg_.convs[i].stride);
      x = layernorm(x, params_[L.ln_g], params_[L.ln_b]);
      x = relu(x);
    }
    TensorT<S> flat({static_cast<int>(x.numel())}, x.data);
    TensorT<S> cf = dense_block(flat, conv_fc_);
    TensorT<S> m = dense_block(meas, meas0_);
    m = dense_block(m, meas1_);
    TensorT<S> fused = concat(cf, m);
    TensorT<S> trunk = dense_block(fused, trunk0_);
    trunk = dense_block(trunk, trunk1_);

    TensorT<S> ah = dense_block(trunk, act_h_);
    TensorT<S> raw = linear(ah, params_[act_out_.w], params_[act_out_.b]);
    TensorT<S> ab = softplus_plus_one(raw);

    TensorT<S> vin = concat(trunk, extras);
    TensorT<S> vh = dense_block(vin, val_h_);
    TensorT<S> val = linear(vh, params_[val_out_.w], params_[val_out_.b]);

    Output out;
    out.alpha.resize(cfg_.action_dims);
    out.beta.resize(cfg_.action_dims);
    for (int d = 0; d < cfg_.action_dims; ++d) {
      out.alpha[d] = static_cast<double>(ab.data[d]);
      out.beta[d] = static_cast<double>(ab.data[cfg_.action_dims + d]);
    }
    out.value = static_cast<double>(val.data[0]);
    return out;
  }

  struct TrainOut {
    VarT<S> alpha, beta, value;
  };

  /// Taped forward over externally held parameter leaves (one leaf set per
  /// worker, gradients accumulate across its samples). Produces bit-identical
  /// values to forward().
  TrainOut forward_train(TapeT<S>& tape, const std::vector<VarT<S>>& leaves,
                         const TensorT<S>& raster, const TensorT<S>& meas,
                         const TensorT<S>& extras) const {
    VarT<S> x = make_leaf(raster, false);
    for (size_t i = 0; i < conv_layers_.size(); ++i) {
      const Layer& L = conv_layers_[i];
      x = ad::conv2d(tape, x, leaves[L.w], leaves[L.b], cfg_.convs[i].stride);
      x = ad::layernorm(tape, x, leaves[L.ln_g], leaves[L.ln_b]);
      x = ad::relu(tape, x);
    }
    x = ad::flatten(tape, x);
    VarT<S> cf = dense_block_train(tape, leaves, x, conv_fc_);
    VarT<S> m = dense_block_train(tape, leaves, make_leaf(meas, false), meas0_);
    m = dense_block_train(tape, leaves, m, meas1_);
    VarT<S> fused = ad::concat(tape, cf, m);
    VarT<S> trunk = dense_block_train(tape, leaves, fused, trunk0_);
    trunk = dense_block_train(tape, leaves, trunk, trunk1_);

    VarT<S> ah = dense_block_train(tape, leaves, trunk, act_h_);
    VarT<S> raw = ad::linear(tape, ah, leaves[act_out_.w], leaves[act_out_.b]);
    VarT<S> ab = ad::softplus_plus_one(tape, raw);

    VarT<S> vin = ad::concat(tape, trunk, make_leaf(extras, false));
    VarT<S> vh = dense_block_train(tape, leaves, vin, val_h_);
    VarT<S> val = ad::linear(tape, vh, leaves[val_out_.w], leaves[val_out_.b]);

    TrainOut out;
    out.alpha = ad::slice(tape, ab, 0, cfg_.action_dims);
    out.beta = ad::slice(tape, ab, cfg_.action_dims, cfg_.action_dims);
    out.value = val;
    return out;
  }

  /// Fresh parameter leaves sharing the current parameter values (copied) with
  /// zeroed gradient buffers.
  std::vector<VarT<S>> make_param_leaves() const {
    std::vector<VarT<S>> leaves;
    leaves.reserve(params_.size());
    for (const auto& p : params_) leaves.push_back(make_leaf(p, true));
    return leaves;
  }

 private:
  TensorT<S> dense_block(const TensorT<S>& x, const Layer& L) const {
    using namespace ops;
    TensorT<S> y = linear(x, params_[L.w], params_[L.b]);
    y = layernorm(y, params_[L.ln_g], params_[L.ln_b]);
    return relu(y);
  }

  VarT<S> dense_block_train(TapeT<S>& tape, const std::vector<VarT<S>>& leaves, const VarT<S>& x,
                            const Layer& L) const {
    VarT<S> y = ad::linear(tape, x, leaves[L.w], leaves[L.b]);
    y = ad::layernorm(tape, y, leaves[L.ln_g], leaves[L.ln_b]);
    return ad::relu(tape, y);
  }

  int add_param(const std::string& name, TensorT<S> t) {
    names_.push_back(name);
    params_.push_back(std::move(t));
    return static_cast<int>(params_.size()) - 1;
  }

  Layer add_dense(const std::string& name, int in, int out, double gain, RngStream& rng,
                  bool with_ln = true) {
    Layer L;
    TensorT<S> w({out, in});
    detail::orthogonal_init(w, out, in, gain, rng);
    L.w = add_param(name + ".w", std::move(w));
    L.b = add_param(name + ".b", TensorT<S>({out}));
    if (with_ln) {
      TensorT<S> g({out});
      std::fill(g.data.begin(), g.data.end(), S(1));
      L.ln_g = add_param(name + ".ln_g", std::move(g));
      L.ln_b = add_param(name + ".ln_b", TensorT<S>({out}));
    }
    return L;
  }

  void build(RngStream& rng) {
    int c = cfg_.raster_channels, h = cfg_.raster_h, w = cfg_.raster_w;
    for (size_t i = 0; i < cfg_.convs.size(); ++i) {
      const auto& cv = cfg_.convs[i];
      Layer L;
      TensorT<S> wt({cv.out_ch, c, cv.kernel, cv.kernel});
      detail::orthogonal_init(wt, cv.out_ch, c * cv.kernel * cv.kernel, std::sqrt(2.0), rng);
      std::string name = "conv" + std::to_string(i);
      L.w = add_param(name + ".w", std::move(wt));
      L.b = add_param(name + ".b", TensorT<S>({cv.out_ch}));
      TensorT<S> g({cv.out_ch});
      std::fill(g.data.begin(), g.data.end(), S(1));
      L.ln_g = add_param(name + ".ln_g", std::move(g));
      L.ln_b = add_param(name + ".ln_b", TensorT<S>({cv.out_ch}));
      conv_layers_.push_back(L);
      c = cv.out_ch;
      h = ops::conv_out_dim(h, cv.kernel, cv.stride);
      w = ops::conv_out_dim(w, cv.kernel, cv.stride);
      if (h <= 0 || w <= 0) throw std::runtime_error("policy config: conv stack underflows");
    }
    int flat = c * h * w;
    conv_fc_ = add_dense("conv_fc", flat, cfg_.conv_fc, std::sqrt(2.0), rng);
    meas0_ = add_dense("meas0", cfg_.meas_dim, cfg_.meas_hidden, std::sqrt(2.0), rng);
    meas1_ = add_dense("meas1", cfg_.meas_hidden, cfg_.meas_hidden, std::sqrt(2.0), rng);
    trunk0_ = add_dense("trunk0", cfg_.conv_fc + cfg_.meas_hidden, cfg_.trunk_hidden,
                        std::sqrt(2.0), rng);
    trunk1_ = add_dense("trunk1", cfg_.trunk_hidden, cfg_.trunk_hidden, std::sqrt(2.0), rng);
    act_h_ = add_dense("act_h", cfg_.trunk_hidden, cfg_.head_hidden, std::sqrt(2.0), rng);
    act_out_ = add_dense("act_out", cfg_.head_hidden, 2 * cfg_.action_dims, 0.01, rng, false);
    val_h_ = add_dense("val_h", cfg_.trunk_hidden + cfg_.extras_dim, cfg_.head_hidden,
                       std::sqrt(2.0), rng);
    val_out_ = add_dense("val_out", cfg_.head_hidden, 1, 1.0, rng, false);
  }

  PolicyConfig cfg_;
  std::vector<TensorT<S>> params_;
  std::vector<std::string> names_;
  std::vector<Layer> conv_layers_;
  Layer conv_fc_, meas0_, meas1_, trunk0_, trunk1_, act_h_, act_out_, val_h_, val_out_;
};

using PolicyNet = PolicyNetT<float>;

// ---------------------------------------------------------------------------
// Checkpoint container: magic + version, a JSON manifest (tensor names,
// shapes, dtype, endianness, free-form meta) and raw little-endian float32
// payload.
// ---------------------------------------------------------------------------

constexpr char kCheckpointMagic[8] = {'P', 'L', 'N', 'R', 'L', 'C', 'K', '1'};
constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void save_tensors(const std::string& path,
                         const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                         const nlohmann::json& meta = {}) {
  nlohmann::json manifest;
  manifest["endianness"] = "little";
  manifest["dtype"] = "f32";
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json jt;
    jt["name"] = name;
    jt["shape"] = t->shape;
    jt["byte_offset"] = offset;
    offset += static_cast<uint64_t>(t->numel()) * sizeof(float);
    manifest["tensors"].push_back(std::move(jt));
  }
  std::string header = manifest.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path);
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  uint32_t version = kCheckpointVersion;
  f.write(reinterpret_cast<const char*>(&version), sizeof(version));
  uint64_t hlen = header.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : tensors)
    f.write(reinterpret_cast<const char*>(t->ptr()),
            static_cast<std::streamsize>(t->numel() * sizeof(float)));
  if (!f) throw CheckpointError("checkpoint write failed: " + path);
}

struct LoadedCheckpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

inline LoadedCheckpoint load_tensors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw CheckpointError("bad checkpoint magic: " + path);
  uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  nlohmann::json manifest = nlohmann::json::parse(header);
  if (manifest.value("endianness", "little") != "little" ||
      manifest.value("dtype", "f32") != "f32")
    throw CheckpointError("unsupported checkpoint layout");
  LoadedCheckpoint out;
  out.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& jt : manifest.at("tensors")) {
    Tensor t(jt.at("shape").get<std::vector<int>>());
    f.read(reinterpret_cast<char*>(t.ptr()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f) throw CheckpointError("truncated checkpoint payload: " + path);
    out.tensors.emplace_back(jt.at("name").get<std::string>(), std::move(t));
  }
  return out;
}

inline void save_policy(const std::string& path, const PolicyNet& net,
                        nlohmann::json meta = {}) {
  meta["policy_config"] = net.config().to_json();
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (size_t i = 0; i < net.params().size(); ++i)
    tensors.emplace_back(net.param_names()[i], &net.params()[i]);
  save_tensors(path, tensors, meta);
}

inline PolicyNet load_policy(const std::string& path, nlohmann::json* meta_out = nullptr) {
  LoadedCheckpoint ck = load_tensors(path);
  if (!ck.meta.contains("policy_config"))
    throw CheckpointError("checkpoint missing policy_config: " + path);
  PolicyNet net(PolicyConfig::from_json(ck.meta["policy_config"]));
  for (size_t i = 0; i < net.params().size(); ++i) {
    const Tensor* t = ck.find(net.param_names()[i]);
    if (!t) throw CheckpointError("checkpoint missing tensor " + net.param_names()[i]);
    if (t->shape != net.params()[i].shape)
      throw CheckpointError("checkpoint shape mismatch for " + net.param_names()[i]);
    net.params()[i] = *t;
  }
  if (meta_out) *meta_out = ck.meta;
  return net;
}

}  // namespace planrl
