// SPDX-License-Identifier: Apache-2.0
#include "tarac/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace tarac {
namespace {

constexpr double kFallbackBandwidth = 1e-3;

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_bool(const std::string& s) {
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  throw std::invalid_argument("invalid multi_token value '" + s + "'");
}

TokenClass parse_class(const std::string& s) {
  if (s == "correct") return TokenClass::correct;
  if (s == "hallucinated") return TokenClass::hallucinated;
  throw std::invalid_argument("invalid class '" + s + "', expected correct|hallucinated");
}

}  // namespace

std::vector<double> visual_attention_series(std::span<const TraceRecord> records) {
  if (records.empty()) throw std::invalid_argument("empty trace");
  std::map<std::size_t, std::pair<double, std::size_t>> by_step;
  for (const auto& r : records) {
    auto& [sum, count] = by_step[r.step];
    sum += r.mass;
    ++count;
  }
  std::vector<double> series;
  series.reserve(by_step.size());
  std::size_t expected = 1;
  for (const auto& [step, acc] : by_step) {
    if (step != expected++) throw std::invalid_argument("trace steps must run 1..T without gaps");
    series.push_back(acc.first / static_cast<double>(acc.second));
  }
  return series;
}

std::vector<double> image_token_profile(std::span<const TraceRecord> records) {
  if (records.empty()) throw std::runtime_error("profile not recorded");
  std::vector<double> mean;
  for (const auto& r : records) {
    if (!r.profile) throw std::runtime_error("profile not recorded");
    if (mean.empty()) mean.assign(r.profile->size(), 0.0);
    if (r.profile->size() != mean.size()) {
      throw std::invalid_argument("profiles differ in length");
    }
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (*r.profile)[i];
  }
  for (double& m : mean) m /= static_cast<double>(records.size());
  return mean;
}

std::vector<double> profile_difference(std::span<const double> lhs, std::span<const double> rhs) {
  if (lhs.size() != rhs.size()) throw std::invalid_argument("profiles differ in length");
  std::vector<double> out(lhs.size());
  for (std::size_t i = 0; i < lhs.size(); ++i) out[i] = lhs[i] - rhs[i];
  return out;
}

GaussianKde::GaussianKde(std::vector<double> samples, Bandwidth bandwidth)
    : samples_(std::move(samples)) {
  if (samples_.empty()) throw std::invalid_argument("kde needs at least one sample");
  if (const auto* fixed = std::get_if<FixedBandwidth>(&bandwidth)) {
    if (!(fixed->h > 0.0)) throw std::invalid_argument("kde bandwidth must be > 0");
    h_ = fixed->h;
    return;
  }
  const double n = static_cast<double>(samples_.size());
  double sd = 0.0;
  if (samples_.size() > 1) {
    double mean = 0.0;
    for (double x : samples_) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : samples_) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / (n - 1.0));
  }
  if (sd > 0.0) {
    h_ = sd * std::pow(n, -0.2);
  } else {
    h_ = kFallbackBandwidth;
    fallback_ = true;
  }
}

double GaussianKde::operator()(double x) const noexcept {
  const double norm = 1.0 / (static_cast<double>(samples_.size()) * h_ *
                             std::sqrt(2.0 * std::numbers::pi));
  double sum = 0.0;
  for (double xi : samples_) {
    const double u = (x - xi) / h_;
    sum += std::exp(-0.5 * u * u);
  }
  return sum * norm;
}

std::vector<double> GaussianKde::evaluate(std::span<const double> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back((*this)(x));
  return out;
}

double GaussianKde::min_sample() const noexcept {
  return *std::min_element(samples_.begin(), samples_.end());
}

double GaussianKde::max_sample() const noexcept {
  return *std::max_element(samples_.begin(), samples_.end());
}

std::vector<double> GaussianKde::grid(std::size_t points, double pad) const {
  const double lo = min_sample() - pad * h_;
  const double hi = max_sample() + pad * h_;
  std::vector<double> xs(points);
  if (points == 1) {
    xs[0] = 0.5 * (lo + hi);
    return xs;
  }
  const double dx = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) xs[i] = lo + dx * static_cast<double>(i);
  return xs;
}

std::vector<LabeledToken> first_occurrence_filter(std::span<const LabeledToken> labels) {
  std::unordered_map<std::string, std::size_t> earliest;  // word -> index into labels
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    if (l.multi_token) continue;
    auto [it, inserted] = earliest.try_emplace(l.word, i);
    if (!inserted && l.step < labels[it->second].step) it->second = i;
  }
  std::vector<LabeledToken> out;
  out.reserve(earliest.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].multi_token) continue;
    if (earliest.at(labels[i].word) == i) out.push_back(labels[i]);
  }
  return out;
}

std::vector<LabeledToken> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label file " + path.string());
  std::vector<LabeledToken> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (line_no == 1 && line.rfind("step", 0) == 0) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(trim(f));
    if (fields.size() != 4) {
      throw std::runtime_error("label line " + std::to_string(line_no) + ": expected 4 fields");
    }
    try {
      LabeledToken t;
      std::size_t used = 0;
      t.step = std::stoul(fields[0], &used);
      if (used != fields[0].size()) throw std::invalid_argument("bad step");
      t.word = fields[1];
      t.label = parse_class(fields[2]);
      t.multi_token = parse_bool(fields[3]);
      labels.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw std::runtime_error("label line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return labels;
}

ClassDensities class_attention_densities(std::span<const double> series,
                                         std::span<const LabeledToken> labels,
                                         bool first_occurrence_only, Bandwidth bandwidth) {
  std::vector<LabeledToken> kept;
  if (first_occurrence_only) {
    kept = first_occurrence_filter(labels);
  } else {
    kept.assign(labels.begin(), labels.end());
  }

  std::vector<double> attn[2], pos[2];
  for (const auto& l : kept) {
    if (l.step < 1 || l.step > series.size()) {
      throw std::out_of_range("label step " + std::to_string(l.step) + " outside trace");
    }
    const int k = l.label == TokenClass::correct ? 0 : 1;
    attn[k].push_back(series[l.step - 1]);
    pos[k].push_back(static_cast<double>(l.step));
  }

  ClassDensities out;
  out.correct_count = attn[0].size();
  out.hallucinated_count = attn[1].size();
  if (!attn[0].empty()) {
    out.correct_attention.emplace(attn[0], bandwidth);
    out.correct_position.emplace(pos[0], bandwidth);
  }
  if (!attn[1].empty()) {
    out.hallucinated_attention.emplace(attn[1], bandwidth);
    out.hallucinated_position.emplace(pos[1], bandwidth);
  }
  return out;
}

}  // namespace tarac
