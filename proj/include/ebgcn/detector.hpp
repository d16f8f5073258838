#pragma once

#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "ebgcn/graph.hpp"
#include "ebgcn/mask.hpp"

namespace ebgcn {

enum class StopCriterion { GraphOnly, NetworkOnly, Sum };

const char* to_string(StopCriterion c);
StopCriterion criterion_from_string(const std::string& s);

// Normalized hamming distance: differing bits / length, in [0,1].
double mask_distance(const PruneMask& a, const PruneMask& b);

// Symmetric T x T matrix of pairwise mask distances, zero diagonal.
Matrix pairwise_distance_matrix(const std::vector<PruneMask>& history);

// FIFO look-back detector over consecutive-epoch mask distances. Fires
// once, when the queue is full and max(Q) < eta. The first step only seeds
// the previous mask; steps with epoch <= warmup_skip update state but do
// not enter the queue.
class EbDetector {
 public:
  explicit EbDetector(int queue_len = 3, double eta = 0.1,
                      StopCriterion criterion = StopCriterion::Sum,
                      int warmup_skip = 0);

  // Graph-only stopping rule; returns true exactly once, at the firing
  // epoch. Throws contract_error if called after firing.
  bool geb_step(const PruneMask& graph_mask, int epoch);

  // Joint rule: pushes d_g, d_w or d_g + d_w per the criterion.
  bool joint_step(const PruneMask& graph_mask, const PruneMask& net_mask, int epoch);

  bool fired() const { return fired_epoch_ >= 0; }
  int fired_epoch() const { return fired_epoch_; }  // -1 before firing
  double eta() const { return eta_; }
  int queue_len() const { return queue_len_; }
  StopCriterion criterion() const { return criterion_; }
  const std::deque<double>& queue() const { return queue_; }

  // Most recent distances, NaN before the first measurable step.
  double last_graph_distance() const { return last_dg_; }
  double last_network_distance() const { return last_dw_; }
  double last_combined() const { return last_combined_; }

 private:
  bool push_and_check(double d, int epoch);

  int queue_len_;
  double eta_;
  StopCriterion criterion_;
  int warmup_skip_;
  std::deque<double> queue_;
  PruneMask prev_graph_, prev_net_;
  bool seeded_ = false;
  int fired_epoch_ = -1;
  double last_dg_ = std::numeric_limits<double>::quiet_NaN();
  double last_dw_ = std::numeric_limits<double>::quiet_NaN();
  double last_combined_ = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace ebgcn
