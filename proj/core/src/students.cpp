// SPDX-License-Identifier: Apache-2.0
#include "hkd/students.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "hkd/errors.hpp"
#include "hkd/ops.hpp"

namespace hkd {

namespace {

constexpr std::size_t kDownKernel = 4;  // 4x4, stride 2, padding 1 halves even sizes
constexpr std::size_t kMergeKernel = 2;

Tensor uniform_tensor(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

void add_conv(StudentParams& params, const std::string& name, std::size_t c_out,
              std::size_t c_in, std::size_t k, Rng& rng) {
  const std::size_t fan_in = c_in * k * k;
  params.add(name + ".weight", uniform_tensor({c_out, c_in, k, k}, fan_in, rng));
  params.add(name + ".bias", uniform_tensor({c_out}, fan_in, rng));
}

void add_block(StudentParams& params, const std::string& prefix, std::size_t dim,
               std::size_t hidden, Rng& rng) {
  params.add(prefix + ".ln1.gain", Tensor::full({dim}, 1.0, true));
  params.add(prefix + ".ln1.shift", Tensor::zeros({dim}, true));
  params.add(prefix + ".attn.wq", uniform_tensor({dim, dim}, dim, rng));
  params.add(prefix + ".attn.wk", uniform_tensor({dim, dim}, dim, rng));
  params.add(prefix + ".attn.wv", uniform_tensor({dim, dim}, dim, rng));
  params.add(prefix + ".ln2.gain", Tensor::full({dim}, 1.0, true));
  params.add(prefix + ".ln2.shift", Tensor::zeros({dim}, true));
  params.add(prefix + ".ffn.w1", uniform_tensor({dim, hidden}, dim, rng));
  params.add(prefix + ".ffn.b1", uniform_tensor({hidden}, dim, rng));
  params.add(prefix + ".ffn.w2", uniform_tensor({hidden, dim}, hidden, rng));
  params.add(prefix + ".ffn.b2", uniform_tensor({dim}, hidden, rng));
}

void require_image(const Tensor& image, const ArchConfig& cfg) {
  const Shape expected{3, cfg.height, cfg.width};
  if (image.shape() != expected) {
    throw DimensionError("student input " + shape_string(image.shape()) + " does not match " +
                         shape_string(expected));
  }
}

std::string stage_prefix(std::size_t stage) { return "stage" + std::to_string(stage); }

}  // namespace

void ArchConfig::validate() const {
  if (height == 0 || width == 0) throw ConfigError("input size must be positive");
  if (num_classes < 2) throw ConfigError("at least two classes are required");
  for (std::size_t c : cnn_channels) {
    if (c == 0) throw ConfigError("CNN channel counts must be positive");
  }
  for (std::size_t d : vit_dims) {
    if (d == 0) throw ConfigError("ViT stage widths must be positive");
  }
  if (region_dim == 0 || mlp_ratio == 0) throw ConfigError("region_dim and mlp_ratio must be positive");
  if (height % 4 != 0 || width % 4 != 0) {
    throw ConfigError("input size must be divisible by 4 for the CNN stride plan");
  }
  if (patch_size == 0 || height % (patch_size * 4) != 0 || width % (patch_size * 4) != 0) {
    throw ConfigError("input size must be divisible by 4 * patch_size for the ViT stage plan");
  }
  if (num_heads == 0) throw ConfigError("num_heads must be positive");
  for (std::size_t d : vit_dims) {
    if (d % num_heads != 0) {
      throw ConfigError("ViT width " + std::to_string(d) + " not divisible by " +
                        std::to_string(num_heads) + " heads");
    }
  }
}

void StudentParams::add(std::string name, Tensor tensor) {
  if (!tensor.defined()) throw ContractError("parameter '" + name + "' is undefined");
  auto [it, inserted] = entries_.emplace(std::move(name), std::move(tensor));
  if (!inserted) throw ContractError("duplicate parameter '" + it->first + "'");
}

const Tensor& StudentParams::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Tensor& StudentParams::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

bool StudentParams::contains(std::string_view name) const { return entries_.contains(name); }

std::size_t StudentParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

std::vector<Tensor> StudentParams::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [_, t] : entries_) out.push_back(t);
  return out;
}

std::vector<std::string> StudentParams::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

StudentParams StudentParams::detached() const {
  StudentParams out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone(false));
  return out;
}

void StudentParams::zero_grads() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

StudentParams init_cnn_params(const ArchConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto [c1, c2, c3] = cfg.cnn_channels;
  StudentParams p;
  add_conv(p, "conv1", c1, 3, kDownKernel, rng);
  add_conv(p, "conv2", c2, c1, kDownKernel, rng);
  add_conv(p, "conv3", c3, c2, 3, rng);
  add_conv(p, "head", cfg.num_classes, c3, 1, rng);
  return p;
}

StudentParams init_vit_params(const ArchConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto [d1, d2, d3] = cfg.vit_dims;
  StudentParams p;
  add_conv(p, "stage1.embed", d1, 3, cfg.patch_size, rng);
  add_block(p, "stage1", d1, d1 * cfg.mlp_ratio, rng);
  add_conv(p, "stage2.merge", d2, d1, kMergeKernel, rng);
  add_block(p, "stage2", d2, d2 * cfg.mlp_ratio, rng);
  add_conv(p, "stage3.merge", d3, d2, kMergeKernel, rng);
  add_block(p, "stage3", d3, d3 * cfg.mlp_ratio, rng);
  add_conv(p, "head", cfg.num_classes, d3, 1, rng);
  return p;
}

Tensor mlp_block(const Tensor& feature, const StudentParams& params,
                 const ArchConfig& /*cfg*/) {
  const Tensor& w = params.at("conv2.weight");
  if (feature.rank() != 3 || feature.dim(0) != w.dim(1)) {
    throw DimensionError("mlp_block expects " + std::to_string(w.dim(1)) +
                         " input channels, got " + shape_string(feature.shape()));
  }
  return ops::relu(ops::conv2d(feature, w, params.at("conv2.bias"), 2, 1));
}

StudentOutputs cnn_forward(const Tensor& image, const StudentParams& params,
                           const ArchConfig& cfg) {
  require_image(image, cfg);
  StudentOutputs out;
  out.f1 = ops::relu(ops::conv2d(image, params.at("conv1.weight"), params.at("conv1.bias"), 2, 1));
  out.f2 = mlp_block(out.f1, params, cfg);
  out.fl = ops::relu(ops::conv2d(out.f2, params.at("conv3.weight"), params.at("conv3.bias"), 1, 1));
  Tensor logits = ops::conv2d(out.fl, params.at("head.weight"), params.at("head.bias"), 1, 0);
  out.prediction = ops::upsample_bilinear(logits, cfg.height, cfg.width);
  return out;
}

std::vector<Tensor> attention_weights(const Tensor& q, const Tensor& k, std::size_t num_heads) {
  if (q.rank() != 2 || q.shape() != k.shape()) {
    throw DimensionError("attention: query " + shape_string(q.shape()) + " and key " +
                         shape_string(k.shape()) + " must be equal N x D matrices");
  }
  const std::size_t dim = q.dim(1);
  if (num_heads == 0 || dim % num_heads != 0) {
    throw ConfigError("attention width " + std::to_string(dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  const std::size_t d = dim / num_heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Tensor> weights;
  weights.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    Tensor qh = ops::slice_cols(q, h * d, (h + 1) * d);
    Tensor kh = ops::slice_cols(k, h * d, (h + 1) * d);
    Tensor scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt_d);
    weights.push_back(ops::softmax(scores, 1));
  }
  return weights;
}

Tensor attention_mix(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t num_heads) {
  if (v.shape() != q.shape()) {
    throw DimensionError("attention: value " + shape_string(v.shape()) + " vs query " +
                         shape_string(q.shape()));
  }
  std::vector<Tensor> weights = attention_weights(q, k, num_heads);
  const std::size_t d = q.dim(1) / num_heads;
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    heads.push_back(ops::matmul(weights[h], ops::slice_cols(v, h * d, (h + 1) * d)));
  }
  return num_heads == 1 ? heads.front() : ops::concat_cols(heads);
}

Tensor attn_block(const Tensor& tokens, const StudentParams& params, std::string_view prefix,
                  std::size_t num_heads) {
  const std::string p(prefix);
  const Tensor& wq = params.at(p + ".attn.wq");
  if (tokens.rank() != 2 || tokens.dim(1) != wq.dim(0)) {
    throw DimensionError(p + " block expects tokens of width " + std::to_string(wq.dim(0)) +
                         ", got " + shape_string(tokens.shape()));
  }
  if (num_heads == 0 || tokens.dim(1) % num_heads != 0) {
    throw ConfigError(p + " width " + std::to_string(tokens.dim(1)) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  Tensor h = ops::layer_norm(tokens, params.at(p + ".ln1.gain"), params.at(p + ".ln1.shift"));
  Tensor mixed = attention_mix(ops::matmul(h, wq), ops::matmul(h, params.at(p + ".attn.wk")),
                               ops::matmul(h, params.at(p + ".attn.wv")), num_heads);
  Tensor x = ops::add(tokens, mixed);
  Tensor h2 = ops::layer_norm(x, params.at(p + ".ln2.gain"), params.at(p + ".ln2.shift"));
  Tensor hidden =
      ops::gelu(ops::add_bias(ops::matmul(h2, params.at(p + ".ffn.w1")), params.at(p + ".ffn.b1"), 1));
  Tensor ffn = ops::add_bias(ops::matmul(hidden, params.at(p + ".ffn.w2")), params.at(p + ".ffn.b2"), 1);
  return ops::add(x, ffn);
}

Tensor vit_stage(const Tensor& feature, const StudentParams& params, const ArchConfig& cfg,
                 std::size_t stage) {
  if (stage != 2 && stage != 3) throw ContractError("vit_stage handles stages 2 and 3");
  const std::string p = stage_prefix(stage);
  const Tensor& w = params.at(p + ".merge.weight");
  if (feature.rank() != 3 || feature.dim(0) != w.dim(1)) {
    throw DimensionError(p + " expects " + std::to_string(w.dim(1)) + " input channels, got " +
                         shape_string(feature.shape()));
  }
  Tensor merged = ops::conv2d(feature, w, params.at(p + ".merge.bias"), kMergeKernel, 0);
  const std::size_t h = merged.dim(1);
  const std::size_t wd = merged.dim(2);
  Tensor tokens = attn_block(ops::map_to_tokens(merged), params, p, cfg.num_heads);
  return ops::tokens_to_map(tokens, h, wd);
}

StudentOutputs vit_forward(const Tensor& image, const StudentParams& params,
                           const ArchConfig& cfg) {
  require_image(image, cfg);
  StudentOutputs out;
  Tensor embedded = ops::conv2d(image, params.at("stage1.embed.weight"),
                                params.at("stage1.embed.bias"), cfg.patch_size, 0);
  const std::size_t h = embedded.dim(1);
  const std::size_t w = embedded.dim(2);
  out.f1 = ops::tokens_to_map(
      attn_block(ops::map_to_tokens(embedded), params, "stage1", cfg.num_heads), h, w);
  out.f2 = vit_stage(out.f1, params, cfg, 2);
  out.fl = vit_stage(out.f2, params, cfg, 3);
  Tensor upsampled = ops::upsample_bilinear(out.fl, cfg.height, cfg.width);
  out.prediction = ops::conv2d(upsampled, params.at("head.weight"), params.at("head.bias"), 1, 0);
  return out;
}

StageShapes cnn_stage_shapes(const ArchConfig& cfg) {
  const auto [c1, c2, c3] = cfg.cnn_channels;
  return {{c1, cfg.height / 2, cfg.width / 2},
          {c2, cfg.height / 4, cfg.width / 4},
          {c3, cfg.height / 4, cfg.width / 4}};
}

StageShapes vit_stage_shapes(const ArchConfig& cfg) {
  const auto [d1, d2, d3] = cfg.vit_dims;
  const std::size_t p = cfg.patch_size;
  return {{d1, cfg.height / p, cfg.width / p},
          {d2, cfg.height / (2 * p), cfg.width / (2 * p)},
          {d3, cfg.height / (4 * p), cfg.width / (4 * p)}};
}

}  // namespace hkd
