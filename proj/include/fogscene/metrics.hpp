#pragma once

// Segmentation metrics from a confusion matrix and depth error/accuracy
// metrics over valid pixels.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fogscene/errors.hpp"
#include "fogscene/fogdata.hpp"

namespace fogscene {

/// K×K counts, rows = ground truth, columns = prediction. Mergeable by
/// addition.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return k_; }
  std::int64_t at(int gt, int pred) const { return counts_[index(gt, pred)]; }
  std::int64_t& at(int gt, int pred) { return counts_[index(gt, pred)]; }
  std::int64_t total() const;
  std::int64_t row_sum(int gt) const;
  std::int64_t col_sum(int pred) const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * k_ + c; }
  int k_;
  std::vector<std::int64_t> counts_;
};

/// Counts every pixel whose ground truth is not `ignore`. Throws
/// ContractError on shape mismatch or label values outside [0, K) (other than
/// the ignore value in the ground truth).
void accumulate_confusion(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt,
                          std::uint8_t ignore = kIgnoreLabel);

struct SegmentationMetrics {
  double miou = 0.0;
  double class_avg_acc = 0.0;
  double global_acc = 0.0;
  std::vector<std::optional<double>> per_class_iou;  // empty when the union is empty
};

/// IoU_k = cm[k,k]/(row_k + col_k − cm[k,k]); classes with an empty union are
/// left out of the mean. MetricsError on an all-zero matrix.
SegmentationMetrics segmentation_metrics(const ConfusionMatrix& cm);

struct DepthMetrics {
  double abs_rel = 0.0, sq_rel = 0.0, rmse = 0.0, rmse_log = 0.0;
  double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;
  std::int64_t count = 0;
};

/// Pixel-pooled sums; `add` may be called once per image.
class DepthAccumulator {
 public:
  /// Adds every pixel where `valid` holds. ContractError when a masked
  /// prediction or ground truth is not positive, or on shape mismatch.
  void add(const std::vector<double>& pred_m, const std::vector<double>& gt_m,
           const std::vector<bool>& valid);
  void add(const Image& pred_m, const Image& gt_m);  // valid where gt > 0
  DepthAccumulator& operator+=(const DepthAccumulator& other);
  /// MetricsError when no pixel was added.
  DepthMetrics result() const;

 private:
  double abs_rel_ = 0, sq_rel_ = 0, sq_ = 0, sq_log_ = 0;
  std::int64_t d1_ = 0, d2_ = 0, d3_ = 0, n_ = 0;
};

/// abs_rel = mean |p−g|/g, sq_rel = mean (p−g)²/g, rmse = √mean (p−g)²,
/// rmse_log = √mean (ln p − ln g)², δ_j = fraction with max(p/g, g/p) < 1.25^j.
DepthMetrics depth_metrics(const std::vector<double>& pred_m,
                           const std::vector<double>& gt_m, const std::vector<bool>& valid);

struct EvalReport {
  SegmentationMetrics seg;
  DepthMetrics depth;
  std::int64_t samples = 0;
  bool apply_da = false;

  /// report.json: the flat metric keys plus a `per_class_iou` array.
  std::string to_json() const;
  /// report.txt: a table with one row per class.
  std::string to_text() const;
  void write(const std::filesystem::path& dir) const;
};

/// The flat numeric keys of report.json, in output order.
const std::vector<std::string>& report_keys();

}  // namespace fogscene
