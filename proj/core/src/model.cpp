// SPDX-License-Identifier: Apache-2.0
#include "tarac/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string_view>
#include <type_traits>

#include "json.hpp"
#include "tarac/rng.hpp"

namespace tarac {
namespace {

// Stream ids; layer tensors use kLayerBase * (layer + 1) + kind.
enum StreamId : std::uint64_t {
  kTextEmbedding = 1,
  kImageEmbedding = 2,
  kPositionEmbedding = 3,
  kLmHead = 4,
  kLayerBase = 0x100,
};

enum LayerTensor : std::uint64_t { kWq, kWk, kWv, kWo, kFfnUp, kFfnDown };

void fill_rows(Matrix& m, std::size_t row_begin, std::size_t row_end, SplitMix64 rng,
               double scale) {
  for (std::size_t i = row_begin * m.cols; i < row_end * m.cols; ++i) {
    m.data[i] = static_cast<float>(rng.unit_variance() * scale);
  }
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                     std::uint64_t stream, double scale) {
  Matrix m(rows, cols);
  fill_rows(m, 0, rows, SplitMix64::stream(seed, stream), scale);
  return m;
}

template <typename M>
struct TensorRef {
  std::string name;
  M* matrix;
  std::size_t rows;
  std::size_t cols;
};

// Canonical tensor order, shared by save and load.
template <typename W>
auto tensor_order(W& w) {
  using M = std::conditional_t<std::is_const_v<W>, const Matrix, Matrix>;
  const ModelConfig& c = w.config;
  std::vector<TensorRef<M>> refs;
  refs.push_back({"token_embedding", &w.token_embedding, c.vocab_size, c.d_model});
  refs.push_back({"position_embedding", &w.position_embedding, c.max_seq_len, c.d_model});
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& L = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    refs.push_back({p + "wq", &L.wq, c.d_model, c.d_model});
    refs.push_back({p + "wk", &L.wk, c.d_model, c.d_model});
    refs.push_back({p + "wv", &L.wv, c.d_model, c.d_model});
    refs.push_back({p + "wo", &L.wo, c.d_model, c.d_model});
    refs.push_back({p + "ffn_up", &L.ffn_up, c.d_ff(), c.d_model});
    refs.push_back({p + "ffn_down", &L.ffn_down, c.d_model, c.d_ff()});
  }
  refs.push_back({"lm_head", &w.lm_head, c.vocab_size, c.d_model});
  return refs;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},     {"n_heads", c.n_heads},
          {"d_model", c.d_model},       {"d_head", c.d_head},
          {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
          {"seed", c.seed},             {"end_token", c.end_token},
          {"bos_token", c.bos_token},   {"image_token_base", c.image_token_base}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_head = j.at("d_head").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.end_token = j.at("end_token").get<TokenId>();
  c.bos_token = j.at("bos_token").get<TokenId>();
  c.image_token_base = j.at("image_token_base").get<TokenId>();
  return c;
}

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::string_view bytes, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i));
  }
  return v;
}

[[noreturn]] void corrupt() { throw std::runtime_error("corrupt file"); }

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid model config: " + what); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (n_heads < 1) fail("n_heads must be >= 1");
  if (d_head < 1) fail("d_head must be >= 1");
  if (d_model != n_heads * d_head) fail("d_model must equal n_heads * d_head");
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (max_seq_len < 1) fail("max_seq_len must be >= 1");
  if (end_token >= vocab_size) fail("end_token outside vocabulary");
  if (bos_token >= vocab_size) fail("bos_token outside vocabulary");
  if (image_base() > vocab_size) fail("image_token_base outside vocabulary");
}

std::size_t Weights::parameter_count() const {
  std::size_t n = token_embedding.data.size() + position_embedding.data.size() + lm_head.data.size();
  for (const auto& l : layers) {
    n += l.wq.data.size() + l.wk.data.size() + l.wv.data.size() + l.wo.data.size() +
         l.ffn_up.data.size() + l.ffn_down.data.size();
  }
  return n;
}

Weights init_weights(const ModelConfig& config) {
  config.validate();
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  const std::uint64_t seed = config.seed;

  Weights w;
  w.config = config;
  w.token_embedding = Matrix(config.vocab_size, config.d_model);
  const std::size_t image_base = config.image_base();
  fill_rows(w.token_embedding, 0, image_base, SplitMix64::stream(seed, kTextEmbedding), scale);
  fill_rows(w.token_embedding, image_base, config.vocab_size,
            SplitMix64::stream(seed, kImageEmbedding), scale);
  w.position_embedding =
      random_matrix(config.max_seq_len, config.d_model, seed, kPositionEmbedding, scale);

  w.layers.resize(config.n_layers);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::uint64_t base = kLayerBase * (l + 1);
    auto& L = w.layers[l];
    L.wq = random_matrix(config.d_model, config.d_model, seed, base + kWq, scale);
    L.wk = random_matrix(config.d_model, config.d_model, seed, base + kWk, scale);
    L.wv = random_matrix(config.d_model, config.d_model, seed, base + kWv, scale);
    L.wo = random_matrix(config.d_model, config.d_model, seed, base + kWo, scale);
    L.ffn_up = random_matrix(config.d_ff(), config.d_model, seed, base + kFfnUp, scale);
    L.ffn_down = random_matrix(config.d_model, config.d_ff(), seed, base + kFfnDown, scale);
  }
  w.lm_head = random_matrix(config.vocab_size, config.d_model, seed, kLmHead, scale);
  return w;
}

void save_weights(const Weights& weights, const std::filesystem::path& path) {
  const auto refs = tensor_order(weights);

  nlohmann::json header;
  header["config"] = config_to_json(weights.config);
  header["tensors"] = nlohmann::json::array();
  for (const auto& r : refs) {
    header["tensors"].push_back({{"name", r.name}, {"shape", {r.rows, r.cols}}});
  }
  const std::string header_text = header.dump();

  std::string out = "TTWT";
  put_le<std::uint16_t>(out, kWeightFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out.reserve(out.size() + 4 * weights.parameter_count());
  for (const auto& r : refs) {
    if (r.matrix->data.size() != r.rows * r.cols) {
      throw std::invalid_argument("tensor " + r.name + " does not match config shape");
    }
    for (float f : r.matrix->data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw std::runtime_error("write failed: " + path.string());
}

Weights load_weights(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  const std::string_view view(bytes);

  constexpr std::size_t kPrefix = 4 + 2 + 4;
  if (view.size() < 6 || view.substr(0, 4) != "TTWT" ||
      get_le<std::uint16_t>(view, 4) != kWeightFormatVersion) {
    throw std::runtime_error("unrecognized format");
  }
  if (view.size() < kPrefix) corrupt();
  const std::size_t header_len = get_le<std::uint32_t>(view, 6);
  if (view.size() < kPrefix + header_len) corrupt();

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(view.substr(kPrefix, header_len));
  } catch (const nlohmann::json::exception&) {
    corrupt();
  }

  Weights w;
  try {
    w.config = config_from_json(header.at("config"));
    w.config.validate();
  } catch (const std::exception&) {
    corrupt();
  }
  w.layers.resize(w.config.n_layers);
  auto refs = tensor_order(w);

  std::size_t expected_floats = 0;
  try {
    const auto& tensors = header.at("tensors");
    if (!tensors.is_array() || tensors.size() != refs.size()) corrupt();
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto& t = tensors[i];
      if (t.at("name").get<std::string>() != refs[i].name) corrupt();
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != refs[i].rows || shape[1] != refs[i].cols) corrupt();
      expected_floats += refs[i].rows * refs[i].cols;
    }
  } catch (const nlohmann::json::exception&) {
    corrupt();
  }

  std::size_t offset = kPrefix + header_len;
  if (view.size() - offset != 4 * expected_floats) corrupt();
  for (auto& r : refs) {
    *r.matrix = Matrix(r.rows, r.cols);
    for (float& f : r.matrix->data) {
      f = std::bit_cast<float>(get_le<std::uint32_t>(view, offset));
      offset += 4;
    }
  }
  return w;
}

}  // namespace tarac
