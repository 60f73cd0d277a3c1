#ifndef CTPP_TASKS_HPP
#define CTPP_TASKS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "ctpp/common.hpp"
#include "ctpp/event.hpp"

namespace ctpp {

// One sliding-window task: the window's events split chronologically into
// train / valid / test segments (one segment per source sequence, kept even
// when empty so the pure-integral likelihood contribution survives).
struct TaskSplit {
  int task_index = 0;
  double window_start = 0.0;
  double window_end = 0.0;
  std::vector<EventSequence> train;
  std::vector<EventSequence> valid;
  std::vector<EventSequence> test;
};

// Mean of the inter-event gaps strictly before event i (1-based); the gap
// before the first event is measured from the window start. An empty history
// (i == 1) yields 0 so the estimated conditional time degenerates to the
// window start. i may be size()+1 to summarize the whole sequence.
inline double mean_inter_event_time(const EventSequence& seq, std::size_t i) {
  if (i < 1 || i > seq.size() + 1) {
    throw ValidationError("mean_inter_event_time: index " + std::to_string(i) +
                          " out of range for " + std::to_string(seq.size()) +
                          " events");
  }
  if (i == 1) return 0.0;
  double prev = seq.horizon_start;
  double sum = 0.0;
  for (std::size_t j = 0; j + 1 < i; ++j) {
    sum += seq.events[j].time - prev;
    prev = seq.events[j].time;
  }
  return sum / static_cast<double>(i - 1);
}

// Cuts the window's time span at the ratio quantiles of time (not of event
// count) and assigns events by timestamp.
inline std::array<EventSequence, 3> chrono_split(
    const EventSequence& window_seq,
    std::array<double, 3> ratios = {0.7, 0.1, 0.2}) {
  double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("chrono_split: ratios must sum to 1");
  }
  double a = window_seq.horizon_start;
  double b = window_seq.horizon_end;
  double c1 = a + ratios[0] * (b - a);
  double c2 = a + (ratios[0] + ratios[1]) * (b - a);
  std::array<EventSequence, 3> parts;
  std::array<std::pair<double, double>, 3> bounds = {
      {{a, c1}, {c1, c2}, {c2, b}}};
  for (int k = 0; k < 3; ++k) {
    parts[k].seq_id = window_seq.seq_id;
    parts[k].horizon_start = bounds[k].first;
    parts[k].horizon_end = bounds[k].second;
  }
  for (const Event& ev : window_seq.events) {
    int k = ev.time <= c1 ? 0 : (ev.time <= c2 ? 1 : 2);
    parts[k].events.push_back(ev);
  }
  return parts;
}

// Cuts the global horizon into num_tasks equal-length consecutive windows,
// clips every sequence to each window, and chrono-splits within the window.
// Windows with no events produce empty (but present) segments.
inline std::vector<TaskSplit> slice_tasks(
    const std::vector<EventSequence>& sequences, int num_tasks,
    std::array<double, 3> ratios = {0.7, 0.1, 0.2}) {
  if (num_tasks < 1) throw ConfigError("slice_tasks: num_tasks must be >= 1");
  if (sequences.empty()) throw ConfigError("slice_tasks: no sequences");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const EventSequence& s : sequences) {
    lo = std::min(lo, s.horizon_start);
    hi = std::max(hi, s.horizon_end);
  }
  double width = (hi - lo) / num_tasks;
  std::vector<TaskSplit> out(num_tasks);
  for (int t = 0; t < num_tasks; ++t) {
    TaskSplit& split = out[t];
    split.task_index = t;
    split.window_start = lo + t * width;
    split.window_end = (t + 1 == num_tasks) ? hi : lo + (t + 1) * width;
    for (const EventSequence& s : sequences) {
      EventSequence clipped;
      clipped.seq_id = s.seq_id;
      clipped.horizon_start = split.window_start;
      clipped.horizon_end = split.window_end;
      for (const Event& ev : s.events) {
        if (ev.time > split.window_start && ev.time <= split.window_end) {
          clipped.events.push_back(ev);
        }
      }
      auto parts = chrono_split(clipped, ratios);
      split.train.push_back(std::move(parts[0]));
      split.valid.push_back(std::move(parts[1]));
      split.test.push_back(std::move(parts[2]));
    }
  }
  return out;
}

// Reassembles the full in-window event list of one source sequence; used for
// teacher-forced evaluation where test events condition on their true
// within-window prefix.
inline EventSequence window_sequence(const TaskSplit& split, std::size_t seq_idx) {
  EventSequence full;
  full.seq_id = split.train[seq_idx].seq_id;
  full.horizon_start = split.window_start;
  full.horizon_end = split.window_end;
  for (const auto* part : {&split.train[seq_idx], &split.valid[seq_idx],
                           &split.test[seq_idx]}) {
    for (const Event& ev : part->events) full.events.push_back(ev);
  }
  return full;
}

}  // namespace ctpp

#endif  // CTPP_TASKS_HPP
