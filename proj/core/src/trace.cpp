// SPDX-License-Identifier: Apache-2.0
#include "tarac/trace.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace tarac {
namespace {

using nlohmann::json;

json header_json(const TraceHeader& h) {
  return {{"type", "header"},       {"alpha", h.alpha},       {"beta", h.beta},
          {"layers", h.layers},     {"seed", h.seed},         {"n_image", h.n_image},
          {"n_prompt", h.n_prompt}, {"image_offset", h.image_offset}};
}

std::runtime_error bad_line(std::size_t line, const std::string& what) {
  return std::runtime_error("trace line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<TraceRecord> to_trace_records(const GenerationResult& result,
                                          const std::string& run_id) {
  std::vector<TraceRecord> out;
  out.reserve(result.observations.size());
  for (const auto& o : result.observations) {
    TraceRecord r{o.step, o.layer, o.mass_after, std::nullopt, run_id};
    if (!o.profile.empty()) r.profile = o.profile;
    out.push_back(std::move(r));
  }
  return out;
}

TraceWriter::TraceWriter(const std::filesystem::path& path, const TraceHeader& header)
    : out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open trace file " + path.string());
  out_ << header_json(header).dump() << '\n';
}

void TraceWriter::write(const TraceRecord& r) {
  json j = {{"step", r.step}, {"layer", r.layer}, {"mass", r.mass}};
  if (r.profile) j["profile"] = *r.profile;
  j["run_id"] = r.run_id;
  out_ << j.dump() << '\n';
  if (!out_) throw std::runtime_error("trace write failed");
}

void TraceWriter::write(const std::vector<TraceRecord>& records) {
  for (const auto& r : records) write(r);
}

TraceHeader read_trace_stream(std::istream& in,
                              const std::function<void(TraceRecord&&)>& on_record) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<TraceHeader> header;
  std::map<std::pair<std::string, std::size_t>, std::size_t> last_step;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw bad_line(line_no, e.what());
    }
    try {
      if (!header) {
        if (j.value("type", std::string{}) != "header") throw bad_line(line_no, "missing header");
        TraceHeader h;
        h.alpha = j.at("alpha").get<double>();
        h.beta = j.at("beta").get<double>();
        h.layers = j.at("layers").get<std::string>();
        h.seed = j.at("seed").get<std::uint64_t>();
        h.n_image = j.at("n_image").get<std::size_t>();
        h.n_prompt = j.at("n_prompt").get<std::size_t>();
        h.image_offset = j.value("image_offset", std::size_t{0});
        header = h;
        continue;
      }
      TraceRecord r;
      r.step = j.at("step").get<std::size_t>();
      r.layer = j.at("layer").get<std::size_t>();
      r.mass = j.at("mass").get<double>();
      if (j.contains("profile")) r.profile = j.at("profile").get<std::vector<double>>();
      r.run_id = j.value("run_id", std::string{});
      if (!(r.mass >= 0.0 && r.mass <= 1.0 + 1e-9)) throw bad_line(line_no, "mass outside [0, 1]");
      auto key = std::make_pair(r.run_id, r.layer);
      if (auto it = last_step.find(key); it != last_step.end() && r.step <= it->second) {
        throw bad_line(line_no, "steps must increase within a layer stream");
      }
      last_step[key] = r.step;
      on_record(std::move(r));
    } catch (const json::exception& e) {
      throw bad_line(line_no, e.what());
    }
  }
  if (!header) throw std::runtime_error("trace has no header line");
  return *header;
}

Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file " + path.string());
  Trace trace;
  trace.header = read_trace_stream(in, [&](TraceRecord&& r) { trace.records.push_back(std::move(r)); });
  return trace;
}

std::vector<TraceRecord> select_run(const std::vector<TraceRecord>& records,
                                    const std::string& run_id) {
  std::vector<TraceRecord> out;
  for (const auto& r : records) {
    if (r.run_id == run_id) out.push_back(r);
  }
  return out;
}

std::vector<std::string> run_ids(const std::vector<TraceRecord>& records) {
  std::vector<std::string> ids;
  for (const auto& r : records) {
    if (std::find(ids.begin(), ids.end(), r.run_id) == ids.end()) ids.push_back(r.run_id);
  }
  return ids;
}

}  // namespace tarac
