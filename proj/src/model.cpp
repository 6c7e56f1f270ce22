// Copyright 2026 The fedpdd-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedpdd/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fedpdd/rng.hpp"

namespace fedpdd {

ModelConfig ModelConfig::for_layout(const FieldLayout& layout) {
  ModelConfig cfg;
  cfg.field_count = layout.field_count();
  cfg.vocab_sizes = layout.vocab_sizes;
  return cfg;
}

void ModelConfig::validate() const {
  if (embedding_dim < 1) throw ConfigError("model: embedding_dim must be >= 1");
  if (hidden_widths.empty()) {
    throw ConfigError("model: at least one hidden layer is required");
  }
  for (int w : hidden_widths) {
    if (w < 1) throw ConfigError("model: hidden widths must be positive");
  }
  if (field_count < 1) throw ConfigError("model: field_count must be >= 1");
  if (static_cast<int>(vocab_sizes.size()) != field_count) {
    throw ConfigError("model: vocab_sizes must list every field");
  }
  for (int v : vocab_sizes) {
    if (v < 1) throw ConfigError("model: vocabulary sizes must be positive");
  }
  if (output_classes < 1) {
    throw ConfigError("model: output_classes must be >= 1");
  }
  if (!(logit_clip > 0.0)) throw ConfigError("model: logit_clip must be > 0");
}

LocalModel::LocalModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  const int d = config_.embedding_dim;
  const int fields = config_.field_count;

  std::size_t offset = 0;
  const auto add_group = [this, &offset](std::string name, std::size_t size) {
    groups_.push_back(ParamGroup{std::move(name), offset, size});
    offset += size;
  };

  std::size_t vocab_total = 0;
  for (int f = 0; f < fields; ++f) {
    first_order_offset_.push_back(offset + vocab_total);
    vocab_total += static_cast<std::size_t>(config_.vocab_sizes[f]);
  }
  add_group("first_order", vocab_total);

  std::size_t emb_cursor = offset;
  for (int f = 0; f < fields; ++f) {
    embedding_offset_.push_back(emb_cursor);
    emb_cursor += static_cast<std::size_t>(config_.vocab_sizes[f]) * d;
  }
  add_group("embedding", vocab_total * d);

  int in_width = fields * d;
  std::vector<int> widths = config_.hidden_widths;
  widths.push_back(config_.output_classes);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const int out_width = widths[l];
    layer_in_.push_back(in_width);
    layer_out_.push_back(out_width);
    layer_w_offset_.push_back(offset);
    add_group("mlp.w" + std::to_string(l),
              static_cast<std::size_t>(in_width) * out_width);
    layer_b_offset_.push_back(offset);
    add_group("mlp.b" + std::to_string(l), static_cast<std::size_t>(out_width));
    in_width = out_width;
  }

  params_.assign(offset, 0.0);
  moment1_.assign(offset, 0.0);
  moment2_.assign(offset, 0.0);

  // Seeded initialization: embeddings and dense weights uniform with a
  // fan-in-scaled half-width; first-order weights and biases start at zero.
  Rng rng(seed);
  const auto fill_uniform = [&rng, this](std::size_t at, std::size_t n,
                                         double half_width) {
    for (std::size_t i = 0; i < n; ++i) {
      params_[at + i] = (2.0 * rng.uniform() - 1.0) * half_width;
    }
  };
  fill_uniform(groups_[1].offset, groups_[1].size, 1.0 / std::sqrt(double(d)));
  for (std::size_t l = 0; l < layer_w_offset_.size(); ++l) {
    fill_uniform(layer_w_offset_[l],
                 static_cast<std::size_t>(layer_in_[l]) * layer_out_[l],
                 1.0 / std::sqrt(static_cast<double>(layer_in_[l])));
  }
}

LocalModel::LocalModel(const ModelSnapshot& snapshot)
    : LocalModel(snapshot.config, /*seed=*/0) {
  if (snapshot.params.size() != params_.size()) {
    throw ConfigError("model: snapshot parameter count does not match config");
  }
  params_ = snapshot.params;
}

ModelSnapshot LocalModel::snapshot(int round, double score) const {
  ModelSnapshot snap;
  snap.config = config_;
  snap.params = params_;
  snap.tag = round;
  snap.score = score;
  return snap;
}

void LocalModel::check_record(const FeatureRecord& record) const {
  std::vector<bool> seen(static_cast<std::size_t>(config_.field_count), false);
  const auto use_field = [this, &seen](int f) {
    if (f < 0 || f >= config_.field_count) {
      throw std::domain_error("model: field index " + std::to_string(f) +
                              " outside configured field count");
    }
    if (seen[f]) {
      throw std::domain_error("model: field " + std::to_string(f) +
                              " appears twice in one record");
    }
    seen[f] = true;
  };
  for (const auto& [f, c] : record.categorical) {
    use_field(f);
    if (c < 0 || c >= config_.vocab_sizes[f]) {
      throw std::domain_error("model: category " + std::to_string(c) +
                              " outside vocabulary of field " +
                              std::to_string(f));
    }
  }
  for (const auto& [f, v] : record.numerical) {
    use_field(f);
    if (!std::isfinite(v)) {
      throw std::domain_error("model: non-finite value in field " +
                              std::to_string(f));
    }
  }
}

struct LocalModel::Activations {
  // Per field: multiplier (1 for categorical, the value for numerical; 0 if
  // the field is absent from the record) and the selected vocabulary row.
  std::vector<double> field_scale;
  std::vector<int> field_row;
  std::vector<std::vector<double>> layer_out;  // [0] = embedding concat
  double fm = 0.0;
  std::vector<double> logits;
};

void LocalModel::run_forward(const FeatureRecord& record,
                             Activations& act) const {
  check_record(record);
  const int d = config_.embedding_dim;
  const int fields = config_.field_count;

  act.field_scale.assign(fields, 0.0);
  act.field_row.assign(fields, 0);
  for (const auto& [f, c] : record.categorical) {
    act.field_scale[f] = 1.0;
    act.field_row[f] = c;
  }
  for (const auto& [f, v] : record.numerical) {
    act.field_scale[f] = v;
    act.field_row[f] = 0;
  }

  act.layer_out.assign(layer_in_.size() + 1, {});
  std::vector<double>& x0 = act.layer_out[0];
  x0.assign(static_cast<std::size_t>(fields) * d, 0.0);

  double first_order = 0.0;
  std::vector<double> emb_sum(d, 0.0);
  double emb_sq = 0.0;
  for (int f = 0; f < fields; ++f) {
    const double scale = act.field_scale[f];
    if (scale == 0.0) continue;
    first_order += scale * params_[first_order_offset_[f] + act.field_row[f]];
    const std::size_t row =
        embedding_offset_[f] + static_cast<std::size_t>(act.field_row[f]) * d;
    for (int j = 0; j < d; ++j) {
      const double e = scale * params_[row + j];
      x0[static_cast<std::size_t>(f) * d + j] = e;
      emb_sum[j] += e;
      emb_sq += e * e;
    }
  }
  double pair_sum = 0.0;
  for (int j = 0; j < d; ++j) pair_sum += emb_sum[j] * emb_sum[j];
  act.fm = first_order + 0.5 * (pair_sum - emb_sq);

  for (std::size_t l = 0; l < layer_in_.size(); ++l) {
    const std::vector<double>& in = act.layer_out[l];
    std::vector<double>& out = act.layer_out[l + 1];
    out.assign(static_cast<std::size_t>(layer_out_[l]), 0.0);
    const bool is_head = l + 1 == layer_in_.size();
    const double* w = params_.data() + layer_w_offset_[l];
    const double* b = params_.data() + layer_b_offset_[l];
    for (int o = 0; o < layer_out_[l]; ++o) {
      double a = b[o];
      const double* row = w + static_cast<std::size_t>(o) * layer_in_[l];
      for (int i = 0; i < layer_in_[l]; ++i) a += row[i] * in[i];
      out[o] = is_head ? a : std::max(0.0, a);
    }
  }

  act.logits = act.layer_out.back();
  const int positive = std::min(1, config_.output_classes - 1);
  act.logits[positive] += act.fm;
}

LogitVector LocalModel::forward(const FeatureRecord& record) const {
  Activations act;
  run_forward(record, act);
  return LogitVector{std::move(act.logits)};
}

LogitVector LocalModel::forward_clipped(const FeatureRecord& record) const {
  return forward(record).clipped(config_.logit_clip);
}

std::vector<double> LocalModel::backward(
    const std::vector<FeatureRecord>& batch,
    const std::vector<std::vector<double>>& grad_wrt_logits) const {
  if (batch.size() != grad_wrt_logits.size()) {
    throw std::invalid_argument(
        "backward: batch and logit gradients differ in length");
  }
  if (batch.empty()) {
    throw std::invalid_argument("backward: empty batch");
  }
  const int d = config_.embedding_dim;
  const int m = config_.output_classes;
  const int positive = std::min(1, m - 1);

  std::vector<double> grad(params_.size(), 0.0);
  Activations act;
  std::vector<std::vector<double>> delta(layer_in_.size() + 1);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (static_cast<int>(grad_wrt_logits[s].size()) != m) {
      throw std::invalid_argument(
          "backward: logit gradient has wrong dimension");
    }
    run_forward(batch[s], act);

    delta.back() = grad_wrt_logits[s];
    const double dfm = delta.back()[positive];

    for (std::size_t l = layer_in_.size(); l-- > 0;) {
      const std::vector<double>& in = act.layer_out[l];
      const std::vector<double>& out = act.layer_out[l + 1];
      std::vector<double>& dout = delta[l + 1];
      const bool is_head = l + 1 == layer_in_.size();
      if (!is_head) {
        for (int o = 0; o < layer_out_[l]; ++o) {
          if (out[o] <= 0.0) dout[o] = 0.0;  // rectifier gate
        }
      }
      double* dw = grad.data() + layer_w_offset_[l];
      double* db = grad.data() + layer_b_offset_[l];
      const double* w = params_.data() + layer_w_offset_[l];
      std::vector<double>& din = delta[l];
      din.assign(static_cast<std::size_t>(layer_in_[l]), 0.0);
      for (int o = 0; o < layer_out_[l]; ++o) {
        const double g = dout[o];
        if (g == 0.0) continue;
        db[o] += g;
        const std::size_t row = static_cast<std::size_t>(o) * layer_in_[l];
        for (int i = 0; i < layer_in_[l]; ++i) {
          dw[row + i] += g * in[i];
          din[i] += g * w[row + i];
        }
      }
    }

    // Gradient with respect to each scaled embedding combines the dense
    // path with the pairwise-interaction term d(fm)/d(e_f) = sum - e_f.
    const std::vector<double>& x0 = act.layer_out[0];
    std::vector<double> emb_sum(d, 0.0);
    for (int f = 0; f < config_.field_count; ++f) {
      for (int j = 0; j < d; ++j) {
        emb_sum[j] += x0[static_cast<std::size_t>(f) * d + j];
      }
    }
    for (int f = 0; f < config_.field_count; ++f) {
      const double scale = act.field_scale[f];
      if (scale == 0.0) continue;
      grad[first_order_offset_[f] + act.field_row[f]] += dfm * scale;
      const std::size_t row = embedding_offset_[f] +
                              static_cast<std::size_t>(act.field_row[f]) * d;
      for (int j = 0; j < d; ++j) {
        const double e = x0[static_cast<std::size_t>(f) * d + j];
        const double de = delta[0][static_cast<std::size_t>(f) * d + j] +
                          dfm * (emb_sum[j] - e);
        grad[row + j] += de * scale;
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return grad;
}

void LocalModel::adam_step(const std::vector<double>& gradients,
                           const OptimizerConfig& opt) {
  if (gradients.size() != params_.size()) {
    throw std::invalid_argument("adam_step: gradient size mismatch");
  }
  for (const ParamGroup& group : groups_) {
    for (std::size_t i = group.offset; i < group.offset + group.size; ++i) {
      if (!std::isfinite(gradients[i])) {
        throw NumericError("adam_step: non-finite gradient in group '" +
                           group.name + "'");
      }
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(opt.beta1, step_);
  const double bc2 = 1.0 - std::pow(opt.beta2, step_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    moment1_[i] = opt.beta1 * moment1_[i] + (1.0 - opt.beta1) * gradients[i];
    moment2_[i] =
        opt.beta2 * moment2_[i] + (1.0 - opt.beta2) * gradients[i] * gradients[i];
    const double mhat = moment1_[i] / bc1;
    const double vhat = moment2_[i] / bc2;
    params_[i] -= opt.learning_rate *
                  (mhat / (std::sqrt(vhat) + opt.eps_stability) +
                   opt.weight_decay * params_[i]);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint I/O: versioned header, shapes, then raw doubles (bit-exact).

namespace {

constexpr char kMagic[4] = {'F', 'P', 'D', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError("checkpoint: truncated file");
  return value;
}

}  // namespace

void LocalModel::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::int32_t>(config_.embedding_dim));
  write_pod(out, static_cast<std::int32_t>(config_.field_count));
  write_pod(out, static_cast<std::int32_t>(config_.output_classes));
  write_pod(out, config_.logit_clip);
  write_pod(out, static_cast<std::uint32_t>(config_.hidden_widths.size()));
  for (int w : config_.hidden_widths) {
    write_pod(out, static_cast<std::int32_t>(w));
  }
  write_pod(out, static_cast<std::uint32_t>(config_.vocab_sizes.size()));
  for (int v : config_.vocab_sizes) {
    write_pod(out, static_cast<std::int32_t>(v));
  }
  write_pod(out, static_cast<std::uint64_t>(params_.size()));
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(double)));
  if (!out) throw ConfigError("checkpoint: write failed for " + path);
}

LocalModel LocalModel::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("checkpoint: bad magic in " + path);
  }
  if (read_pod<std::uint32_t>(in) != kVersion) {
    throw ParseError("checkpoint: unsupported version in " + path);
  }
  ModelConfig cfg;
  cfg.embedding_dim = read_pod<std::int32_t>(in);
  cfg.field_count = read_pod<std::int32_t>(in);
  cfg.output_classes = read_pod<std::int32_t>(in);
  cfg.logit_clip = read_pod<double>(in);
  cfg.hidden_widths.resize(read_pod<std::uint32_t>(in));
  for (int& w : cfg.hidden_widths) w = read_pod<std::int32_t>(in);
  cfg.vocab_sizes.resize(read_pod<std::uint32_t>(in));
  for (int& v : cfg.vocab_sizes) v = read_pod<std::int32_t>(in);

  LocalModel model(cfg, /*seed=*/0);
  const auto count = read_pod<std::uint64_t>(in);
  if (count != model.params_.size()) {
    throw ParseError("checkpoint: parameter count does not match shapes");
  }
  in.read(reinterpret_cast<char*>(model.params_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw ParseError("checkpoint: truncated file");
  return model;
}

}  // namespace fedpdd
