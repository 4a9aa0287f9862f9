// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tarac/decoder.hpp"

namespace tarac {

// Trace files are JSON lines. The first line is the header:
//   {"type":"header","alpha":0.5,"beta":0.5,"layers":"2:6","seed":7,
//    "n_image":64,"n_prompt":16,"image_offset":0}
// and every following line is one record:
//   {"step":1,"layer":2,"mass":0.41,"profile":[...],"run_id":"tarac"}
// "profile" is omitted when not recorded.

struct TraceHeader {
  double alpha = 0.0;
  double beta = 0.0;
  std::string layers = "0:0";
  std::uint64_t seed = 0;
  std::size_t n_image = 0;
  std::size_t n_prompt = 0;
  std::size_t image_offset = 0;

  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

struct TraceRecord {
  std::size_t step = 0;
  std::size_t layer = 0;
  double mass = 0.0;
  std::optional<std::vector<double>> profile;
  std::string run_id;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct Trace {
  TraceHeader header;
  std::vector<TraceRecord> records;
};

/// Converts a generation's observations (post-intervention masses) into records.
[[nodiscard]] std::vector<TraceRecord> to_trace_records(const GenerationResult& result,
                                                        const std::string& run_id);

/// Streams records to a file, one line each.
class TraceWriter {
 public:
  TraceWriter(const std::filesystem::path& path, const TraceHeader& header);
  void write(const TraceRecord& record);
  void write(const std::vector<TraceRecord>& records);

 private:
  std::ofstream out_;
};

/// Calls `on_record` for each record without materializing the file. Checks
/// masses lie in [0, 1] and steps strictly increase per (run_id, layer).
TraceHeader read_trace_stream(std::istream& in,
                              const std::function<void(TraceRecord&&)>& on_record);

[[nodiscard]] Trace read_trace(const std::filesystem::path& path);

/// Records belonging to one run, in file order.
[[nodiscard]] std::vector<TraceRecord> select_run(const std::vector<TraceRecord>& records,
                                                  const std::string& run_id);

/// Distinct run ids in order of first appearance.
[[nodiscard]] std::vector<std::string> run_ids(const std::vector<TraceRecord>& records);

}  // namespace tarac
