#include "ebgcn/detector.hpp"

#include <algorithm>

#include "ebgcn/errors.hpp"

namespace ebgcn {

const char* to_string(StopCriterion c) {
  switch (c) {
    case StopCriterion::GraphOnly: return "graph";
    case StopCriterion::NetworkOnly: return "network";
    case StopCriterion::Sum: return "sum";
  }
  return "?";
}

StopCriterion criterion_from_string(const std::string& s) {
  if (s == "graph") return StopCriterion::GraphOnly;
  if (s == "network") return StopCriterion::NetworkOnly;
  if (s == "sum") return StopCriterion::Sum;
  throw argument_error("unknown stop criterion: " + s + " (want graph|network|sum)");
}

double mask_distance(const PruneMask& a, const PruneMask& b) {
  if (a.size() != b.size()) throw contract_error("mask_distance: length mismatch");
  if (a.size() == 0) throw contract_error("mask_distance: empty masks");
  size_t diff = 0;
  const auto& ab = a.bits();
  const auto& bb = b.bits();
  for (size_t i = 0; i < ab.size(); ++i) diff += (ab[i] != bb[i]);
  return static_cast<double>(diff) / static_cast<double>(a.size());
}

Matrix pairwise_distance_matrix(const std::vector<PruneMask>& history) {
  if (history.empty()) throw argument_error("pairwise_distance_matrix: need >= 1 mask");
  const auto t = static_cast<Eigen::Index>(history.size());
  for (const auto& m : history) {
    if (m.size() != history.front().size()) {
      throw contract_error("pairwise_distance_matrix: heterogeneous mask lengths");
    }
  }
  Matrix d = Matrix::Zero(t, t);
  for (Eigen::Index i = 0; i < t; ++i) {
    for (Eigen::Index j = i + 1; j < t; ++j) {
      const double v = mask_distance(history[i], history[j]);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

EbDetector::EbDetector(int queue_len, double eta, StopCriterion criterion, int warmup_skip)
    : queue_len_(queue_len), eta_(eta), criterion_(criterion), warmup_skip_(warmup_skip) {
  if (queue_len < 1) throw argument_error("EbDetector: queue_len must be >= 1");
  if (!(eta > 0.0)) throw argument_error("EbDetector: eta must be positive");
  if (warmup_skip < 0) throw argument_error("EbDetector: warmup_skip must be >= 0");
}

bool EbDetector::push_and_check(double d, int epoch) {
  if (epoch <= warmup_skip_) return false;
  queue_.push_back(d);
  while (static_cast<int>(queue_.size()) > queue_len_) queue_.pop_front();
  if (static_cast<int>(queue_.size()) < queue_len_) return false;
  if (*std::max_element(queue_.begin(), queue_.end()) < eta_) {
    fired_epoch_ = epoch;
    return true;
  }
  return false;
}

bool EbDetector::geb_step(const PruneMask& graph_mask, int epoch) {
  if (fired()) throw contract_error("EbDetector: step after firing (one-shot)");
  if (!seeded_) {
    prev_graph_ = graph_mask;
    seeded_ = true;
    return false;
  }
  const double d = mask_distance(graph_mask, prev_graph_);
  prev_graph_ = graph_mask;
  last_dg_ = d;
  last_combined_ = d;
  return push_and_check(d, epoch);
}

bool EbDetector::joint_step(const PruneMask& graph_mask, const PruneMask& net_mask,
                            int epoch) {
  if (fired()) throw contract_error("EbDetector: step after firing (one-shot)");
  if (!seeded_) {
    prev_graph_ = graph_mask;
    prev_net_ = net_mask;
    seeded_ = true;
    return false;
  }
  const double dg = mask_distance(graph_mask, prev_graph_);
  const double dw = mask_distance(net_mask, prev_net_);
  prev_graph_ = graph_mask;
  prev_net_ = net_mask;
  last_dg_ = dg;
  last_dw_ = dw;
  double d = 0.0;
  switch (criterion_) {
    case StopCriterion::GraphOnly: d = dg; break;
    case StopCriterion::NetworkOnly: d = dw; break;
    case StopCriterion::Sum: d = dg + dw; break;
  }
  last_combined_ = d;
  return push_and_check(d, epoch);
}

}  // namespace ebgcn
