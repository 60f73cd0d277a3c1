#ifndef CTPP_EVENT_HPP
#define CTPP_EVENT_HPP

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctpp/common.hpp"

namespace ctpp {

// A typed event. Type ids are 1-based and live in {1..num_types}.
struct Event {
  int type_id = 0;
  double time = 0.0;
};

// Time-ordered events observed on the half-open-at-left window
// (horizon_start, horizon_end]. Inter-event times are measured with the
// first gap taken from horizon_start.
struct EventSequence {
  std::string seq_id;
  double horizon_start = 0.0;
  double horizon_end = 0.0;
  std::vector<Event> events;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  double span() const { return horizon_end - horizon_start; }

  // Gap preceding event i (1-based); the gap before the first event is
  // measured from the window start.
  double inter_event_time(std::size_t i) const {
    double prev = (i <= 1) ? horizon_start : events[i - 2].time;
    return events[i - 1].time - prev;
  }

  void validate(int num_types) const {
    if (!(horizon_start < horizon_end)) {
      throw ValidationError("sequence " + seq_id + ": horizon start " +
                            format_double(horizon_start) + " must precede end " +
                            format_double(horizon_end));
    }
    double prev = horizon_start;
    for (std::size_t i = 0; i < events.size(); ++i) {
      const Event& ev = events[i];
      if (!std::isfinite(ev.time) || ev.time < 0.0) {
        throw ValidationError("sequence " + seq_id + ": event " +
                              std::to_string(i) + " has invalid time");
      }
      if (ev.time <= prev) {
        throw ValidationError("sequence " + seq_id +
                              ": non-increasing timestamps at event " +
                              std::to_string(i));
      }
      if (ev.time > horizon_end) {
        throw ValidationError("sequence " + seq_id + ": event " +
                              std::to_string(i) + " past horizon end");
      }
      if (num_types > 0 && (ev.type_id < 1 || ev.type_id > num_types)) {
        throw ValidationError("sequence " + seq_id + ": type_id " +
                              std::to_string(ev.type_id) + " outside 1.." +
                              std::to_string(num_types));
      }
      prev = ev.time;
    }
  }
};

inline nlohmann::json sequence_to_json(const EventSequence& s) {
  nlohmann::json evs = nlohmann::json::array();
  for (const Event& e : s.events) evs.push_back({{"t", e.time}, {"e", e.type_id}});
  return {{"seq_id", s.seq_id},
          {"horizon", {s.horizon_start, s.horizon_end}},
          {"events", std::move(evs)}};
}

inline EventSequence sequence_from_json(const nlohmann::json& j) {
  EventSequence s;
  s.seq_id = j.at("seq_id").get<std::string>();
  const auto& hz = j.at("horizon");
  if (!hz.is_array() || hz.size() != 2) {
    throw ParseError("sequence " + s.seq_id + ": horizon must be [start, end]");
  }
  s.horizon_start = hz[0].get<double>();
  s.horizon_end = hz[1].get<double>();
  for (const auto& ev : j.at("events")) {
    s.events.push_back({ev.at("e").get<int>(), ev.at("t").get<double>()});
  }
  return s;
}

// Reads one JSONL record per line. Blank lines are skipped; any other
// malformed line is a parse error carrying its 1-based line number.
inline std::vector<EventSequence> load_sequences(const std::string& path,
                                                 int num_types) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<EventSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed JSON");
    }
    EventSequence s;
    try {
      s = sequence_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    s.validate(num_types);
    out.push_back(std::move(s));
  }
  return out;
}

inline void save_sequences(const std::string& path,
                           const std::vector<EventSequence>& seqs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const EventSequence& s : seqs) out << sequence_to_json(s).dump() << "\n";
}

}  // namespace ctpp

#endif  // CTPP_EVENT_HPP
