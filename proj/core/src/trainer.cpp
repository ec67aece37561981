// SPDX-License-Identifier: Apache-2.0
#include "hkd/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <string_view>
#include <utility>

#include "hkd/bsd.hpp"
#include "hkd/errors.hpp"
#include "hkd/losses.hpp"
#include "hkd/miou.hpp"
#include "hkd/ops.hpp"

namespace hkd {

namespace {

bool finite_non_negative(double v) { return std::isfinite(v) && v >= 0.0; }

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

// Adds `weight * term` to `acc` unless the weight is zero.
Tensor add_weighted(const Tensor& acc, const Tensor& term, double weight) {
  if (weight == 0.0) return acc;
  return ops::add(acc, weight == 1.0 ? term : ops::scale(term, weight));
}

std::vector<double> arch_values(const ArchConfig& a) {
  return {static_cast<double>(a.height),          static_cast<double>(a.width),
          static_cast<double>(a.num_classes),     static_cast<double>(a.cnn_channels[0]),
          static_cast<double>(a.cnn_channels[1]), static_cast<double>(a.cnn_channels[2]),
          static_cast<double>(a.vit_dims[0]),     static_cast<double>(a.vit_dims[1]),
          static_cast<double>(a.vit_dims[2]),     static_cast<double>(a.patch_size),
          static_cast<double>(a.num_heads),       static_cast<double>(a.mlp_ratio),
          static_cast<double>(a.region_dim)};
}

ArchConfig arch_from_values(const std::vector<double>& v) {
  if (v.size() != 13) throw FormatError("checkpoint arch record has the wrong length");
  std::vector<std::size_t> n;
  for (double x : v) {
    if (!(x >= 0.0) || x != std::floor(x)) throw FormatError("checkpoint arch record is malformed");
    n.push_back(static_cast<std::size_t>(x));
  }
  ArchConfig a;
  a.height = n[0];
  a.width = n[1];
  a.num_classes = n[2];
  a.cnn_channels = {n[3], n[4], n[5]};
  a.vit_dims = {n[6], n[7], n[8]};
  a.patch_size = n[9];
  a.num_heads = n[10];
  a.mlp_ratio = n[11];
  a.region_dim = n[12];
  return a;
}

void append_params(std::vector<ArchiveRecord>& out, std::string_view prefix,
                   const StudentParams& params) {
  for (const auto& [name, t] : params) {
    const auto d = t.data();
    out.push_back({std::string(prefix) + name, t.shape(), std::vector<double>(d.begin(), d.end())});
  }
}

Checkpoint fresh_checkpoint(const ArchConfig& arch, std::uint64_t seed) {
  Rng init = Rng::substream(seed, "init");
  StudentParams cnn = init_cnn_params(arch, init);
  StudentParams vit = init_vit_params(arch, init);
  DistillationTransforms transforms = DistillationTransforms::create(arch, init);
  return {arch, std::move(cnn), std::move(vit), std::move(transforms)};
}

std::vector<Tensor> concat(std::vector<Tensor> a, const std::vector<Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void check_finite(double value, const char* term, std::size_t step) {
  if (!std::isfinite(value)) {
    throw TrainingError("non-finite " + std::string(term) + " at step " + std::to_string(step));
  }
}

}  // namespace

void TrainConfig::validate() const {
  arch.validate();
  require(finite_non_negative(alpha), "alpha must be finite and non-negative");
  require(finite_non_negative(beta), "beta must be finite and non-negative");
  require(finite_non_negative(gamma), "gamma must be finite and non-negative");
  require(max_iterations >= 1, "max_iterations must be at least 1");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(finite_non_negative(sgd.lr), "sgd lr must be finite and non-negative");
  require(finite_non_negative(sgd.momentum) && sgd.momentum < 1.0, "sgd momentum must lie in [0, 1)");
  require(finite_non_negative(sgd.weight_decay), "sgd weight_decay must be non-negative");
  require(finite_non_negative(adamw.lr), "adamw lr must be finite and non-negative");
  require(finite_non_negative(adamw.beta1) && adamw.beta1 < 1.0, "adamw beta1 must lie in [0, 1)");
  require(finite_non_negative(adamw.beta2) && adamw.beta2 < 1.0, "adamw beta2 must lie in [0, 1)");
  require(std::isfinite(adamw.eps) && adamw.eps > 0.0, "adamw eps must be positive");
  require(finite_non_negative(adamw.weight_decay), "adamw weight_decay must be non-negative");
}

std::string format_metrics_line(const MetricsRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%zu %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g", r.step,
                r.l_ce_c, r.l_ce_v, r.l_hfd_c, r.l_hfd_v, r.l_r_c, r.l_r_v, r.l_p_c, r.l_p_v,
                r.m_hat, r.m, r.miou_c, r.miou_v);
  return buf;
}

FrozenBlocks FrozenBlocks::from(const StudentParams& cnn, const StudentParams& vit,
                                const ArchConfig& arch) {
  return {FrozenBlock::vit_second_stage(vit, arch), FrozenBlock::cnn_second_layer(cnn, arch)};
}

Objective total_objective(const StudentOutputs& out_c, const StudentOutputs& out_v,
                          const LabelMap& labels, const TrainConfig& cfg,
                          const DistillationTransforms& transforms, const FrozenBlocks& frozen) {
  Objective obj;
  MetricsRecord& rec = obj.record;
  PixelCE ce_c = pixel_ce(out_c.prediction, labels);
  PixelCE ce_v = pixel_ce(out_v.prediction, labels);
  rec.l_ce_c = ce_c.loss.item();
  rec.l_ce_v = ce_v.loss.item();
  Tensor loss_c = ce_c.loss;
  Tensor loss_v = ce_v.loss;

  // A term whose weight is zero is evaluated without recording a graph.
  auto term = [](double weight, auto&& compute) {
    if (weight != 0.0) return compute();
    NoGradGuard guard;
    return compute();
  };

  if (cfg.toggles.hfd) {
    const Tensor hfd_c = term(cfg.beta, [&] {
      return hfd_loss_cnn(out_c.f1, transforms.cnn_first, frozen.vit_second, out_v.f2);
    });
    const Tensor hfd_v = term(cfg.beta, [&] {
      return hfd_loss_vit(out_v.f1, transforms.vit_first, frozen.cnn_second, out_c.f2);
    });
    rec.l_hfd_c = hfd_c.item();
    rec.l_hfd_v = hfd_v.item();
    loss_c = add_weighted(loss_c, hfd_c, cfg.beta);
    loss_v = add_weighted(loss_v, hfd_v, cfg.beta);
  }

  if (cfg.toggles.region_bsd) {
    const Shape& rs = transforms.region_shape;
    const RegionGrid grid = RegionGrid::make(labels.height, labels.width, rs[1], rs[2]);
    const DirectionMask mask =
        build_region_mask(region_ce(ce_c.map, grid), region_ce(ce_v.map, grid));
    rec.m_hat = static_cast<double>(mask.count);
    const DirectionalLosses region = term(cfg.gamma, [&] {
      return region_loss(region_similarity_pair(apply_gamma(out_c.fl, transforms.cnn_last),
                                                apply_gamma(out_v.fl, transforms.vit_last)),
                         mask);
    });
    rec.l_r_c = region.cnn.item();
    rec.l_r_v = region.vit.item();
    loss_c = add_weighted(loss_c, region.cnn, cfg.gamma);
    loss_v = add_weighted(loss_v, region.vit, cfg.gamma);
  }

  if (cfg.toggles.pixel_bsd) {
    const DirectionMask mask = build_pixel_mask(ce_c.map, ce_v.map);
    rec.m = static_cast<double>(mask.count);
    const double weight = cfg.gamma * cfg.alpha;
    const DirectionalLosses pixel =
        term(weight, [&] { return pixel_loss(out_c.prediction, out_v.prediction, mask); });
    rec.l_p_c = pixel.cnn.item();
    rec.l_p_v = pixel.vit.item();
    loss_c = add_weighted(loss_c, pixel.cnn, weight);
    loss_v = add_weighted(loss_v, pixel.vit, weight);
  }

  obj.cnn = loss_c;
  obj.vit = loss_v;
  return obj;
}

EvalResult evaluate_students(const StudentParams& cnn, const StudentParams& vit,
                             const ArchConfig& arch, const Dataset& data) {
  NoGradGuard guard;
  ConfusionMatrix cm_c(arch.num_classes);
  ConfusionMatrix cm_v(arch.num_classes);
  for (const Sample& s : data) {
    cm_c.accumulate(argmax_labels(cnn_forward(s.image, cnn, arch).prediction), s.labels);
    cm_v.accumulate(argmax_labels(vit_forward(s.image, vit, arch).prediction), s.labels);
  }
  return {cm_c.miou(), cm_v.miou()};
}

std::vector<ArchiveRecord> checkpoint_records(const Checkpoint& ckpt) {
  std::vector<ArchiveRecord> out;
  const std::vector<double> arch = arch_values(ckpt.arch);
  out.push_back({"arch", {arch.size()}, arch});
  append_params(out, "cnn/", ckpt.cnn);
  append_params(out, "vit/", ckpt.vit);
  append_params(out, "transforms/", ckpt.transforms.cnn_side());
  append_params(out, "transforms/", ckpt.transforms.vit_side());
  return out;
}

Checkpoint checkpoint_from_records(const std::vector<ArchiveRecord>& records) {
  if (records.empty() || records.front().name != "arch") {
    throw FormatError("checkpoint does not start with an arch record");
  }
  const ArchConfig arch = arch_from_values(records.front().values);
  try {
    arch.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint holds an invalid architecture: ") + e.what());
  }
  Checkpoint ckpt = fresh_checkpoint(arch, 0);
  StudentParams cnn_t = ckpt.transforms.cnn_side();
  StudentParams vit_t = ckpt.transforms.vit_side();
  std::size_t expected = 1 + ckpt.cnn.size() + ckpt.vit.size() + cnn_t.size() + vit_t.size();
  if (records.size() != expected) throw FormatError("checkpoint has an unexpected record count");
  for (std::size_t i = 1; i < records.size(); ++i) {
    const ArchiveRecord& r = records[i];
    const auto slash = r.name.find('/');
    if (slash == std::string::npos) throw FormatError("checkpoint record '" + r.name + "' has no group");
    const std::string group = r.name.substr(0, slash);
    const std::string name = r.name.substr(slash + 1);
    StudentParams* target = nullptr;
    if (group == "cnn") {
      target = &ckpt.cnn;
    } else if (group == "vit") {
      target = &ckpt.vit;
    } else if (group == "transforms") {
      target = cnn_t.contains(name) ? &cnn_t : &vit_t;
    }
    if (target == nullptr || !target->contains(name)) {
      throw FormatError("unexpected checkpoint record '" + r.name + "'");
    }
    Tensor& t = target->at(name);
    if (t.shape() != r.shape) throw FormatError("checkpoint record '" + r.name + "' has the wrong shape");
    auto dst = t.mutable_data();
    std::copy(r.values.begin(), r.values.end(), dst.begin());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_archive(path, checkpoint_records(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_records(read_archive(path));
}

CollaborativeTrainer::CollaborativeTrainer(TrainConfig cfg, Dataset train, Dataset eval)
    : cfg_((cfg.validate(), std::move(cfg))),
      train_(std::move(train)),
      eval_(std::move(eval)),
      ckpt_(fresh_checkpoint(cfg_.arch, cfg_.seed)),
      sgd_(concat(ckpt_.cnn.tensors(), ckpt_.transforms.cnn_side().tensors()), cfg_.sgd),
      adamw_(concat(ckpt_.vit.tensors(), ckpt_.transforms.vit_side().tensors()), cfg_.adamw),
      shuffle_(Rng::substream(cfg_.seed, "shuffle")) {
  if (train_.empty()) throw DataError("training set is empty");
  for (const Dataset* set : {&train_, &eval_}) {
    for (const Sample& s : *set) {
      if (s.image.shape() != Shape{3, cfg_.arch.height, cfg_.arch.width}) {
        throw DataError("sample " + shape_string(s.image.shape()) + " does not match the " +
                        std::to_string(cfg_.arch.height) + "x" + std::to_string(cfg_.arch.width) +
                        " architecture");
      }
    }
  }
  order_.resize(train_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  cursor_ = order_.size();
}

std::vector<std::size_t> CollaborativeTrainer::next_batch() {
  std::vector<std::size_t> batch;
  batch.reserve(cfg_.batch_size);
  while (batch.size() < cfg_.batch_size) {
    if (cursor_ == order_.size()) {
      for (std::size_t i = order_.size(); i > 1; --i) {
        std::swap(order_[i - 1], order_[shuffle_.integer(0, i - 1)]);
      }
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

MetricsRecord CollaborativeTrainer::step() {
  const std::size_t step_index = step_ + 1;
  const std::vector<std::size_t> batch = next_batch();
  const FrozenBlocks frozen = FrozenBlocks::from(ckpt_.cnn, ckpt_.vit, cfg_.arch);
  const double inv = 1.0 / static_cast<double>(batch.size());

  MetricsRecord rec;
  rec.step = step_index;
  Tensor loss_c;
  Tensor loss_v;
  for (std::size_t idx : batch) {
    const Sample& s = train_[idx];
    const StudentOutputs out_c = cnn_forward(s.image, ckpt_.cnn, cfg_.arch);
    const StudentOutputs out_v = vit_forward(s.image, ckpt_.vit, cfg_.arch);
    const Objective obj = total_objective(out_c, out_v, s.labels, cfg_, ckpt_.transforms, frozen);
    loss_c = loss_c.defined() ? ops::add(loss_c, obj.cnn) : obj.cnn;
    loss_v = loss_v.defined() ? ops::add(loss_v, obj.vit) : obj.vit;
    const MetricsRecord& r = obj.record;
    rec.l_ce_c += r.l_ce_c * inv;
    rec.l_ce_v += r.l_ce_v * inv;
    rec.l_hfd_c += r.l_hfd_c * inv;
    rec.l_hfd_v += r.l_hfd_v * inv;
    rec.l_r_c += r.l_r_c * inv;
    rec.l_r_v += r.l_r_v * inv;
    rec.l_p_c += r.l_p_c * inv;
    rec.l_p_v += r.l_p_v * inv;
    rec.m_hat += r.m_hat * inv;
    rec.m += r.m * inv;
  }
  check_finite(rec.l_ce_c, "l_ce_c", step_index);
  check_finite(rec.l_ce_v, "l_ce_v", step_index);
  check_finite(rec.l_hfd_c, "l_hfd_c", step_index);
  check_finite(rec.l_hfd_v, "l_hfd_v", step_index);
  check_finite(rec.l_r_c, "l_r_c", step_index);
  check_finite(rec.l_r_v, "l_r_v", step_index);
  check_finite(rec.l_p_c, "l_p_c", step_index);
  check_finite(rec.l_p_v, "l_p_v", step_index);
  loss_c = ops::scale(loss_c, inv);
  loss_v = ops::scale(loss_v, inv);
  check_finite(loss_c.item(), "L^C", step_index);
  check_finite(loss_v.item(), "L^V", step_index);

  backward(loss_c);
  backward(loss_v);
  sgd_.step();
  adamw_.step();
  sgd_.zero_grad();
  adamw_.zero_grad();
  step_ = step_index;
  return rec;
}

EvalResult CollaborativeTrainer::evaluate() const {
  return evaluate_students(ckpt_.cnn, ckpt_.vit, cfg_.arch, eval_);
}

std::vector<MetricsRecord> CollaborativeTrainer::run(
    const std::function<void(const MetricsRecord&)>& on_record) {
  std::vector<MetricsRecord> records;
  while (step_ < cfg_.max_iterations) {
    MetricsRecord rec = step();
    const bool last = step_ == cfg_.max_iterations;
    const bool periodic = cfg_.eval_every != 0 && step_ % cfg_.eval_every == 0;
    if (!eval_.empty() && (last || periodic)) {
      const EvalResult ev = evaluate();
      rec.miou_c = ev.miou_c;
      rec.miou_v = ev.miou_v;
    }
    if (on_record) on_record(rec);
    records.push_back(rec);
  }
  return records;
}

}  // namespace hkd
