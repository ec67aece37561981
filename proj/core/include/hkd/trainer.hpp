// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hkd/archive.hpp"
#include "hkd/dataset.hpp"
#include "hkd/hfd.hpp"
#include "hkd/optim.hpp"
#include "hkd/students.hpp"

namespace hkd {

struct LossToggles {
  bool hfd = true;
  bool region_bsd = true;
  bool pixel_bsd = true;
  bool operator==(const LossToggles&) const = default;
};

struct TrainConfig {
  ArchConfig arch;
  double alpha = 1.0;  // pixel term weight inside the selective loss
  double beta = 0.1;   // feature distillation weight
  double gamma = 1.0;  // selective distillation weight
  std::size_t max_iterations = 300;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  SgdConfig sgd;
  AdamWConfig adamw;
  LossToggles toggles;
  /// Evaluate every this many steps; 0 evaluates only after the final step.
  std::size_t eval_every = 0;

  /// Throws ConfigError on an out-of-range field.
  void validate() const;
};

/// One line of the metrics log. Losses are batch means; m_hat and m are
/// batch means of the per-image mask counts. miou fields are -1 on steps
/// without an evaluation.
struct MetricsRecord {
  std::size_t step = 0;
  double l_ce_c = 0.0;
  double l_ce_v = 0.0;
  double l_hfd_c = 0.0;
  double l_hfd_v = 0.0;
  double l_r_c = 0.0;
  double l_r_v = 0.0;
  double l_p_c = 0.0;
  double l_p_v = 0.0;
  double m_hat = 0.0;
  double m = 0.0;
  double miou_c = -1.0;
  double miou_v = -1.0;
};

/// "step l_ce_c l_ce_v l_hfd_c l_hfd_v l_r_c l_r_v l_p_c l_p_v m_hat m miou_c miou_v",
/// space separated, reals with 9 significant digits, no trailing newline.
std::string format_metrics_line(const MetricsRecord& r);

/// Per-image training objectives.
struct Objective {
  Tensor cnn;
  Tensor vit;
  MetricsRecord record;  // step and miou left at their defaults
};

/// Borrowed second blocks for the feature distillation terms.
struct FrozenBlocks {
  FrozenBlock vit_second;
  FrozenBlock cnn_second;
  static FrozenBlocks from(const StudentParams& cnn, const StudentParams& vit,
                           const ArchConfig& arch);
};

/// L^C = CE + beta*HFD + gamma*(L_R + alpha*L_P) and its ViT mirror for one
/// image. A term joins the graph only when its toggle is on and its weight is
/// nonzero; an enabled term with zero weight is still evaluated for the record.
Objective total_objective(const StudentOutputs& out_c, const StudentOutputs& out_v,
                          const LabelMap& labels, const TrainConfig& cfg,
                          const DistillationTransforms& transforms, const FrozenBlocks& frozen);

struct EvalResult {
  double miou_c = 0.0;
  double miou_v = 0.0;
};

EvalResult evaluate_students(const StudentParams& cnn, const StudentParams& vit,
                             const ArchConfig& arch, const Dataset& data);

/// Full model state as stored on disk: an "arch" record followed by
/// "cnn/<name>", "vit/<name>" and "transforms/<name>" records.
struct Checkpoint {
  ArchConfig arch;
  StudentParams cnn;
  StudentParams vit;
  DistillationTransforms transforms;
};

std::vector<ArchiveRecord> checkpoint_records(const Checkpoint& ckpt);
Checkpoint checkpoint_from_records(const std::vector<ArchiveRecord>& records);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Both students, their transforms and optimizers, trained jointly.
class CollaborativeTrainer {
 public:
  CollaborativeTrainer(TrainConfig cfg, Dataset train, Dataset eval = {});

  /// One optimisation step on the next batch. Throws TrainingError when a
  /// loss term is not finite.
  MetricsRecord step();
  /// Runs until max_iterations steps have been taken, evaluating per
  /// eval_every. `on_record` sees every record in order.
  std::vector<MetricsRecord> run(const std::function<void(const MetricsRecord&)>& on_record = {});
  EvalResult evaluate() const;

  std::size_t steps_taken() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  const StudentParams& cnn() const { return ckpt_.cnn; }
  const StudentParams& vit() const { return ckpt_.vit; }
  const DistillationTransforms& transforms() const { return ckpt_.transforms; }
  const Checkpoint& checkpoint() const { return ckpt_; }

 private:
  std::vector<std::size_t> next_batch();

  TrainConfig cfg_;
  Dataset train_;
  Dataset eval_;
  Checkpoint ckpt_;
  SgdMomentum sgd_;
  AdamW adamw_;
  Rng shuffle_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
};

}  // namespace hkd
