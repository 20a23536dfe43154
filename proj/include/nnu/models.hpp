#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "nnu/init.hpp"
#include "nnu/ops.hpp"
#include "nnu/rng.hpp"
#include "nnu/tensor.hpp"

namespace nnu {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// ---------------------------------------------------------------------------
// 3D-CNN backbone. Fixed layer list:
//   conv3@64 BN ReLU | pool | conv1@32 | conv3@128 | pool | conv1@64 |
//   conv3@256 | pool | conv1@128 | conv3@512 | pool | GAP
// (every conv followed by BN+ReLU). Channel widths divide by width_scale for
// desk-scale runs; spatial shapes are untouched. Two heads read the pooled
// representation: class sigmoid units (3 or 7) and 9 linear coordinate units.
// ---------------------------------------------------------------------------
struct CnnConfig {
  std::size_t class_units = 3;  // 3 (type bits) or 7 (combination one-hot)
  std::size_t coord_units = 9;
  std::size_t width_scale = 1;
  std::size_t input_d = 64, input_h = 64, input_w = 32;  // spatial input dims
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
};

struct CnnBlockSpec {
  std::size_t ksize;
  std::size_t channels;
  bool pool_after;
};

inline const std::array<CnnBlockSpec, 7>& cnn_arch() {
  static const std::array<CnnBlockSpec, 7> arch = {{{3, 64, true},
                                                    {1, 32, false},
                                                    {3, 128, true},
                                                    {1, 64, false},
                                                    {3, 256, true},
                                                    {1, 128, false},
                                                    {3, 512, true}}};
  return arch;
}

inline std::size_t scaled_width(std::size_t ch, std::size_t scale) {
  return std::max<std::size_t>(1, ch / std::max<std::size_t>(1, scale));
}

template <typename T>
class Cnn3dModel {
 public:
  struct Outputs {
    Tensor<T> class_probs;     // [N, class_units], sigmoid
    Tensor<T> coords;          // [N, coord_units], linear
    Tensor<T> representation;  // [N, rep_dim]
  };

  Cnn3dModel(const CnnConfig& cfg, Rng& rng) : cfg_(cfg) {
    std::size_t cin = 1;
    int conv_idx = 1;
    for (const auto& spec : cnn_arch()) {
      Block b;
      b.ksize = spec.ksize;
      b.cout = scaled_width(spec.channels, cfg.width_scale);
      b.pool_after = spec.pool_after;
      const std::size_t fan_in = spec.ksize * spec.ksize * spec.ksize * cin;
      b.kernel = he_init<T>({spec.ksize, spec.ksize, spec.ksize, cin, b.cout},
                            fan_in, rng);
      b.bias = Tensor<T>({b.cout});
      b.gamma = Tensor<T>::full({b.cout}, T(1));
      b.beta = Tensor<T>({b.cout});
      b.run_mean = Tensor<T>({b.cout});
      b.run_var = Tensor<T>::full({b.cout}, T(1));
      b.name = "conv" + std::to_string(conv_idx++);
      blocks_.push_back(std::move(b));
      cin = blocks_.back().cout;
    }
    rep_dim_ = cin;
    head_class_w_ = he_init<T>({rep_dim_, cfg.class_units}, rep_dim_, rng);
    head_class_b_ = Tensor<T>({cfg.class_units});
    head_coord_w_ = he_init<T>({rep_dim_, cfg.coord_units}, rep_dim_, rng);
    head_coord_b_ = Tensor<T>({cfg.coord_units});
  }

  Outputs forward(GradTape<T>* tape, const Tensor<T>& input, BnMode mode) {
    ++forward_count;
    if (input.rank() != 5 || input.dim(1) != cfg_.input_d ||
        input.dim(2) != cfg_.input_h || input.dim(3) != cfg_.input_w ||
        input.dim(4) != 1)
      throw DimensionError(
          "cnn input layer expects [N," + std::to_string(cfg_.input_d) + "," +
          std::to_string(cfg_.input_h) + "," + std::to_string(cfg_.input_w) +
          ",1], got " + shape_str(input.shape()));
    Tensor<T> x = input;
    for (auto& b : blocks_) {
      x = conv3d(tape, x, b.kernel, b.bias, Padding::Same, 1);
      x = batchnorm(tape, x, b.gamma, b.beta, b.run_mean, b.run_var, mode,
                    cfg_.bn_eps, cfg_.bn_momentum);
      x = relu(tape, x);
      if (b.pool_after) x = maxpool3d(tape, x);
    }
    Outputs out;
    out.representation = global_average_pool(tape, x);
    out.class_probs = dense(tape, out.representation, head_class_w_,
                            head_class_b_, Activation::Sigmoid);
    out.coords = dense(tape, out.representation, head_coord_w_, head_coord_b_,
                       Activation::Linear);
    return out;
  }

  std::vector<NamedParam<T>> named_params() {
    std::vector<NamedParam<T>> v;
    int bn_idx = 1;
    for (auto& b : blocks_) {
      v.push_back({b.name + ".kernel", b.kernel});
      v.push_back({b.name + ".bias", b.bias});
      v.push_back({"bn" + std::to_string(bn_idx) + ".gamma", b.gamma});
      v.push_back({"bn" + std::to_string(bn_idx) + ".beta", b.beta});
      ++bn_idx;
    }
    v.push_back({"head.class.w", head_class_w_});
    v.push_back({"head.class.b", head_class_b_});
    v.push_back({"head.coord.w", head_coord_w_});
    v.push_back({"head.coord.b", head_coord_b_});
    return v;
  }

  std::vector<NamedParam<T>> named_state() {
    std::vector<NamedParam<T>> v;
    int bn_idx = 1;
    for (auto& b : blocks_) {
      v.push_back({"bn" + std::to_string(bn_idx) + ".run_mean", b.run_mean});
      v.push_back({"bn" + std::to_string(bn_idx) + ".run_var", b.run_var});
      ++bn_idx;
    }
    return v;
  }

  std::vector<Tensor<T>> params() {
    std::vector<Tensor<T>> v;
    for (auto& np : named_params()) v.push_back(np.tensor);
    return v;
  }

  void set_trainable(bool b) {
    for (auto& np : named_params()) np.tensor.set_requires_grad(b);
  }

  const CnnConfig& config() const { return cfg_; }
  std::size_t rep_dim() const { return rep_dim_; }
  const Tensor<T>& class_head_w() const { return head_class_w_; }
  const Tensor<T>& class_head_b() const { return head_class_b_; }

  // Expected [D,H,W,C] trace after each layer row (conv/pool), the GAP width
  // and the head widths, for a 64x64x32x1 input.
  struct ShapeTrace {
    std::vector<std::array<std::size_t, 4>> rows;
    std::size_t gap_dim;
    std::size_t class_units;
    std::size_t coord_units;
  };
  static ShapeTrace expected_trace(const CnnConfig& cfg) {
    ShapeTrace tr;
    std::array<std::size_t, 4> cur = {cfg.input_d, cfg.input_h, cfg.input_w, 1};
    for (const auto& spec : cnn_arch()) {
      cur[3] = scaled_width(spec.channels, cfg.width_scale);
      tr.rows.push_back(cur);
      if (spec.pool_after) {
        cur[0] /= 2;
        cur[1] /= 2;
        cur[2] /= 2;
        tr.rows.push_back(cur);
      }
    }
    tr.gap_dim = cur[3];
    tr.class_units = cfg.class_units;
    tr.coord_units = cfg.coord_units;
    return tr;
  }

  // Shape trace of an actual forward pass (layer outputs, batch stripped).
  std::vector<std::array<std::size_t, 4>> trace(const Tensor<T>& input) const {
    std::vector<std::array<std::size_t, 4>> rows;
    Tensor<T> x = input;
    for (const auto& b : blocks_) {
      x = conv3d<T>(nullptr, x, b.kernel, b.bias, Padding::Same, 1);
      rows.push_back({x.dim(1), x.dim(2), x.dim(3), x.dim(4)});
      if (b.pool_after) {
        x = maxpool3d<T>(nullptr, x);
        rows.push_back({x.dim(1), x.dim(2), x.dim(3), x.dim(4)});
      }
    }
    return rows;
  }

  mutable std::size_t forward_count = 0;

 private:
  struct Block {
    std::string name;
    std::size_t ksize = 3, cout = 1;
    bool pool_after = false;
    Tensor<T> kernel, bias, gamma, beta;
    Tensor<T> run_mean, run_var;
  };
  CnnConfig cfg_;
  std::vector<Block> blocks_;
  std::size_t rep_dim_ = 0;
  Tensor<T> head_class_w_, head_class_b_, head_coord_w_, head_coord_b_;
};

// ---------------------------------------------------------------------------
// Stacked LSTM classifier: two layers, hidden width 512 (scaled), the second
// layer consumes the first layer's per-step outputs, and the final-step
// hidden state feeds a sigmoid head.
// ---------------------------------------------------------------------------
struct LstmConfig {
  std::size_t hidden = 512;
  std::size_t input_dim = 1;
  std::size_t seq_len = 100;
  std::size_t class_units = 4;
  double input_gain = 1.0;  // fixed input scaling applied at the first layer
};

template <typename T>
class LstmModel {
 public:
  struct Outputs {
    Tensor<T> class_probs;     // [N, class_units]
    Tensor<T> representation;  // [N, hidden] final-step hidden state
  };

  LstmModel(const LstmConfig& cfg, Rng& rng) : cfg_(cfg) {
    init_layer(layer1_, cfg.hidden + cfg.input_dim, cfg.hidden, rng);
    init_layer(layer2_, cfg.hidden + cfg.hidden, cfg.hidden, rng);
    head_w_ = glorot_init<T>({cfg.hidden, cfg.class_units}, cfg.hidden,
                             cfg.class_units, rng);
    head_b_ = Tensor<T>({cfg.class_units});
  }

  Outputs forward(GradTape<T>* tape, const Tensor<T>& input) {
    ++forward_count;
    if (input.rank() != 3 || input.dim(1) != cfg_.seq_len ||
        input.dim(2) != cfg_.input_dim)
      throw DimensionError("lstm input expects [N," +
                           std::to_string(cfg_.seq_len) + "," +
                           std::to_string(cfg_.input_dim) + "], got " +
                           shape_str(input.shape()));
    const std::size_t n = input.dim(0);
    Tensor<T> a1({n, cfg_.hidden}), c1({n, cfg_.hidden});
    Tensor<T> a2({n, cfg_.hidden}), c2({n, cfg_.hidden});
    for (std::size_t t = 0; t < cfg_.seq_len; ++t) {
      Tensor<T> x_t({n, cfg_.input_dim});
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t f = 0; f < cfg_.input_dim; ++f)
          x_t[b * cfg_.input_dim + f] = static_cast<T>(
              cfg_.input_gain *
              double(input[(b * cfg_.seq_len + t) * cfg_.input_dim + f]));
      auto [a1n, c1n] = lstm_cell(tape, x_t, a1, c1, layer1_);
      a1 = a1n;
      c1 = c1n;
      auto [a2n, c2n] = lstm_cell(tape, a1, a2, c2, layer2_);
      a2 = a2n;
      c2 = c2n;
    }
    Outputs out;
    out.representation = a2;
    out.class_probs =
        dense(tape, a2, head_w_, head_b_, Activation::Sigmoid);
    return out;
  }

  std::vector<NamedParam<T>> named_params() {
    std::vector<NamedParam<T>> v;
    auto add_layer = [&v](const std::string& prefix, LstmCellParams<T>& p) {
      v.push_back({prefix + ".w_cand", p.w_cand});
      v.push_back({prefix + ".w_update", p.w_update});
      v.push_back({prefix + ".w_forget", p.w_forget});
      v.push_back({prefix + ".w_output", p.w_output});
      v.push_back({prefix + ".b_cand", p.b_cand});
      v.push_back({prefix + ".b_update", p.b_update});
      v.push_back({prefix + ".b_forget", p.b_forget});
      v.push_back({prefix + ".b_output", p.b_output});
    };
    add_layer("lstm1", layer1_);
    add_layer("lstm2", layer2_);
    v.push_back({"head.w", head_w_});
    v.push_back({"head.b", head_b_});
    return v;
  }

  std::vector<Tensor<T>> params() {
    std::vector<Tensor<T>> v;
    for (auto& np : named_params()) v.push_back(np.tensor);
    return v;
  }

  void set_trainable(bool b) {
    for (auto& np : named_params()) np.tensor.set_requires_grad(b);
  }

  const LstmConfig& config() const { return cfg_; }
  const LstmCellParams<T>& layer1() const { return layer1_; }
  const LstmCellParams<T>& layer2() const { return layer2_; }
  const Tensor<T>& head_w() const { return head_w_; }
  const Tensor<T>& head_b() const { return head_b_; }

  mutable std::size_t forward_count = 0;

 private:
  static void init_layer(LstmCellParams<T>& p, std::size_t rows,
                         std::size_t hidden, Rng& rng) {
    p.w_cand = glorot_init<T>({rows, hidden}, rows, hidden, rng);
    p.w_update = glorot_init<T>({rows, hidden}, rows, hidden, rng);
    p.w_forget = glorot_init<T>({rows, hidden}, rows, hidden, rng);
    p.w_output = glorot_init<T>({rows, hidden}, rows, hidden, rng);
    p.b_cand = Tensor<T>({hidden});
    p.b_update = Tensor<T>({hidden});
    p.b_forget = Tensor<T>({hidden});
    p.b_output = Tensor<T>({hidden});
  }

  LstmConfig cfg_;
  LstmCellParams<T> layer1_, layer2_;
  Tensor<T> head_w_, head_b_;
};

// ---------------------------------------------------------------------------
// Unified routing: a fused 7-sigmoid classification layer (3 frequency units
// + 4 time units) over whichever backbone matches the sample's domain, with
// the other domain's units forced inactive (zero contribution). The
// regression switch engages only on the frequency path.
// ---------------------------------------------------------------------------
enum class Domain { Frequency, Time };

struct RoutedPrediction {
  std::array<double, 7> class_probs{};  // slots 0..2 freq, 3..6 time
  std::array<int, 7> class_bits{};
  bool has_coords = false;
  std::array<double, 9> coords{};  // normalized units
};

template <typename T>
std::vector<int> predict_labels(const Tensor<T>& probs,
                                double threshold = 0.5) {
  std::vector<int> bits(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    bits[i] = double(probs[i]) > threshold ? 1 : 0;
  return bits;
}

template <typename T>
RoutedPrediction fused_route(Cnn3dModel<T>& cnn, LstmModel<T>& lstm,
                             const Tensor<T>& sample, Domain domain) {
  if (cnn.config().class_units != 3)
    throw ValidationError(
        "fused head composes a 3-unit frequency head and a 4-unit time head; "
        "got a " +
        std::to_string(cnn.config().class_units) + "-unit cnn head");
  RoutedPrediction out;
  if (domain == Domain::Frequency) {
    if (sample.rank() != 5 || sample.dim(0) != 1)
      throw ValidationError("routing error: frequency sample must be "
                            "[1,64,64,32,1], got " +
                            shape_str(sample.shape()));
    auto y = cnn.forward(nullptr, sample, BnMode::Infer);
    for (std::size_t i = 0; i < 3; ++i) out.class_probs[i] = y.class_probs[i];
    out.has_coords = true;  // the regression switch
    for (std::size_t i = 0; i < 9; ++i) out.coords[i] = y.coords[i];
  } else {
    if (sample.rank() != 3 || sample.dim(0) != 1)
      throw ValidationError("routing error: time sample must be [1,100,1], "
                            "got " +
                            shape_str(sample.shape()));
    auto y = lstm.forward(nullptr, sample);
    for (std::size_t i = 0; i < 4; ++i)
      out.class_probs[3 + i] = y.class_probs[i];
    out.has_coords = false;
  }
  for (std::size_t i = 0; i < 7; ++i)
    out.class_bits[i] = out.class_probs[i] > 0.5 ? 1 : 0;
  return out;
}

// 3-bit class vector -> index in the 7-element combination set (for the
// 7-unit head encoding), ordered by the binary value of (L, P1, P2).
inline int combination_index(const std::array<int, 3>& bits) {
  const int v = bits[0] * 4 + bits[1] * 2 + bits[2];
  if (v == 0) throw ValidationError("empty class vector has no combination");
  return v - 1;  // 1..7 -> 0..6
}

}  // namespace nnu
