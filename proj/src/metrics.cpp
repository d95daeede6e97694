#include "fogscene/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace fogscene {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw ContractError("confusion matrix needs >= 1 class");
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::row_sum(int gt) const {
  std::int64_t s = 0;
  for (int c = 0; c < k_; ++c) s += at(gt, c);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(int pred) const {
  std::int64_t s = 0;
  for (int r = 0; r < k_; ++r) s += at(r, pred);
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ContractError("cannot merge confusion matrices of different K");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

void accumulate_confusion(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt,
                          std::uint8_t ignore) {
  if (pred.height != gt.height || pred.width != gt.width || pred.channels != 1 ||
      gt.channels != 1) {
    throw ContractError("accumulate_confusion: prediction and ground truth differ in shape");
  }
  const int k = cm.num_classes();
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const int g = gt.data[i];
    const int p = pred.data[i];
    if (p >= k) throw ContractError("predicted label " + std::to_string(p) + " >= K");
    if (g == ignore) continue;
    if (g >= k) throw ContractError("ground-truth label " + std::to_string(g) + " >= K");
    ++cm.at(g, p);
  }
}

SegmentationMetrics segmentation_metrics(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw MetricsError("segmentation metrics over an empty confusion matrix");
  SegmentationMetrics m;
  double iou_sum = 0.0, acc_sum = 0.0, trace = 0.0;
  int iou_n = 0, acc_n = 0;
  for (int k = 0; k < cm.num_classes(); ++k) {
    const double tp = static_cast<double>(cm.at(k, k));
    const double row = static_cast<double>(cm.row_sum(k));
    const double uni = row + static_cast<double>(cm.col_sum(k)) - tp;
    trace += tp;
    if (uni > 0) {
      m.per_class_iou.push_back(tp / uni);
      iou_sum += tp / uni;
      ++iou_n;
    } else {
      m.per_class_iou.push_back(std::nullopt);
    }
    if (row > 0) {
      acc_sum += tp / row;
      ++acc_n;
    }
  }
  m.miou = iou_sum / iou_n;
  m.class_avg_acc = acc_n > 0 ? acc_sum / acc_n : 0.0;
  m.global_acc = trace / static_cast<double>(total);
  return m;
}

void DepthAccumulator::add(const std::vector<double>& pred, const std::vector<double>& gt,
                           const std::vector<bool>& valid) {
  if (pred.size() != gt.size() || gt.size() != valid.size()) {
    throw ContractError("depth metrics: prediction, ground truth and mask differ in size");
  }
  static const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!valid[i]) continue;
    const double p = pred[i], g = gt[i];
    if (!(p > 0.0) || !(g > 0.0)) {
      throw ContractError("depth metrics need positive depths on the mask");
    }
    const double diff = p - g;
    abs_rel_ += std::abs(diff) / g;
    sq_rel_ += diff * diff / g;
    sq_ += diff * diff;
    const double dl = std::log(p) - std::log(g);
    sq_log_ += dl * dl;
    const double ratio = std::max(p / g, g / p);
    d1_ += ratio < t1;
    d2_ += ratio < t2;
    d3_ += ratio < t3;
    ++n_;
  }
}

void DepthAccumulator::add(const Image& pred, const Image& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.channels != 1 ||
      gt.channels != 1) {
    throw ContractError("depth metrics: prediction and ground truth differ in shape");
  }
  std::vector<bool> valid(gt.data.size());
  for (std::size_t i = 0; i < gt.data.size(); ++i) valid[i] = gt.data[i] > 0.0;
  add(pred.data, gt.data, valid);
}

DepthAccumulator& DepthAccumulator::operator+=(const DepthAccumulator& o) {
  abs_rel_ += o.abs_rel_;
  sq_rel_ += o.sq_rel_;
  sq_ += o.sq_;
  sq_log_ += o.sq_log_;
  d1_ += o.d1_;
  d2_ += o.d2_;
  d3_ += o.d3_;
  n_ += o.n_;
  return *this;
}

DepthMetrics DepthAccumulator::result() const {
  if (n_ == 0) throw MetricsError("depth metrics over an empty mask");
  const double n = static_cast<double>(n_);
  DepthMetrics m;
  m.abs_rel = abs_rel_ / n;
  m.sq_rel = sq_rel_ / n;
  m.rmse = std::sqrt(sq_ / n);
  m.rmse_log = std::sqrt(sq_log_ / n);
  m.delta1 = static_cast<double>(d1_) / n;
  m.delta2 = static_cast<double>(d2_) / n;
  m.delta3 = static_cast<double>(d3_) / n;
  m.count = n_;
  return m;
}

DepthMetrics depth_metrics(const std::vector<double>& pred, const std::vector<double>& gt,
                           const std::vector<bool>& valid) {
  DepthAccumulator acc;
  acc.add(pred, gt, valid);
  return acc.result();
}

const std::vector<std::string>& report_keys() {
  static const std::vector<std::string> keys{
      "miou",     "class_avg_acc", "global_acc", "abs_rel", "sq_rel",
      "rmse",     "rmse_log",      "delta1",     "delta2",  "delta3"};
  return keys;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["miou"] = seg.miou;
  j["class_avg_acc"] = seg.class_avg_acc;
  j["global_acc"] = seg.global_acc;
  j["abs_rel"] = depth.abs_rel;
  j["sq_rel"] = depth.sq_rel;
  j["rmse"] = depth.rmse;
  j["rmse_log"] = depth.rmse_log;
  j["delta1"] = depth.delta1;
  j["delta2"] = depth.delta2;
  j["delta3"] = depth.delta3;
  auto per_class = nlohmann::ordered_json::array();
  for (const auto& v : seg.per_class_iou) {
    per_class.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr));
  }
  j["per_class_iou"] = per_class;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_text() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "samples: %lld   domain adaptation: %s\n\n",
                static_cast<long long>(samples), apply_da ? "on" : "off");
  out += line;
  out += "class   IoU\n";
  for (std::size_t k = 0; k < seg.per_class_iou.size(); ++k) {
    if (seg.per_class_iou[k]) {
      std::snprintf(line, sizeof line, "%5zu   %6.2f\n", k, 100.0 * *seg.per_class_iou[k]);
    } else {
      std::snprintf(line, sizeof line, "%5zu      n/a\n", k);
    }
    out += line;
  }
  std::snprintf(line, sizeof line,
                "\nmIoU %6.2f   class avg. acc. %6.2f   global acc. %6.2f\n\n",
                100.0 * seg.miou, 100.0 * seg.class_avg_acc, 100.0 * seg.global_acc);
  out += line;
  out += "Abs. Rel.  Sq. Rel.   RMSE       RMSE log   d<1.25     d<1.25^2   d<1.25^3\n";
  std::snprintf(line, sizeof line,
                "%-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f\n",
                depth.abs_rel, depth.sq_rel, depth.rmse, depth.rmse_log, depth.delta1,
                depth.delta2, depth.delta3);
  out += line;
  return out;
}

void EvalReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.json", std::ios::trunc) << to_json();
  std::ofstream(dir / "report.txt", std::ios::trunc) << to_text();
}

}  // namespace fogscene
