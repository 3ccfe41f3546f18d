#pragma once

// Sensory encoding h = f(u) and the perceive pipeline:
// encode -> (bind engram if memorable) -> decode triples with time clamped to h.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "engram/memory_model.hpp"
#include "engram/query.hpp"
#include "engram/random.hpp"

namespace engram {

using SensoryVector = std::vector<double>;

enum class EncoderKind { identity, affine, hidden };

/// identity:  h = u
/// affine:    h = W u + b
/// hidden:    h = W2 tanh(W1 u + b1) + b2
/// followed by max(h, 0) when `nonnegative_output` is set. Matrices are row-major.
struct Encoder {
  EncoderKind kind = EncoderKind::identity;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> w1, b1, w2, b2;
  bool nonnegative_output = false;

  static Encoder identity(std::size_t dim, bool nonnegative_output = false) {
    Encoder e;
    e.input_dim = e.output_dim = dim;
    e.nonnegative_output = nonnegative_output;
    e.validate();
    return e;
  }

  static Encoder affine(std::size_t input_dim, std::size_t output_dim, std::vector<double> w,
                        std::vector<double> b, bool nonnegative_output = false) {
    Encoder e;
    e.kind = EncoderKind::affine;
    e.input_dim = input_dim;
    e.output_dim = output_dim;
    e.w1 = std::move(w);
    e.b1 = std::move(b);
    e.nonnegative_output = nonnegative_output;
    e.validate();
    return e;
  }

  /// One hidden tanh layer with weights uniform in +-1/sqrt(fan_in), biases zero.
  static Encoder seeded_hidden(std::size_t input_dim, std::size_t hidden_dim,
                               std::size_t output_dim, std::uint64_t seed,
                               bool nonnegative_output = false) {
    Encoder e;
    e.kind = EncoderKind::hidden;
    e.input_dim = input_dim;
    e.hidden_dim = hidden_dim;
    e.output_dim = output_dim;
    e.nonnegative_output = nonnegative_output;
    Rng rng(seed);
    auto fill = [&](std::vector<double>& w, std::size_t n, std::size_t fan_in) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      w.resize(n);
      for (double& x : w) x = scale * (2.0 * uniform01(rng) - 1.0);
    };
    fill(e.w1, hidden_dim * input_dim, input_dim);
    e.b1.assign(hidden_dim, 0.0);
    fill(e.w2, output_dim * hidden_dim, hidden_dim);
    e.b2.assign(output_dim, 0.0);
    e.validate();
    return e;
  }

  void validate() const {
    auto need = [](const std::vector<double>& v, std::size_t n, const char* what) {
      if (v.size() != n)
        throw DimensionError(std::string("encoder ") + what + " has " + std::to_string(v.size()) +
                             " entries, expected " + std::to_string(n));
    };
    if (input_dim == 0 || output_dim == 0) throw DimensionError("encoder dimensions must be positive");
    switch (kind) {
      case EncoderKind::identity:
        if (input_dim != output_dim)
          throw DimensionError("identity encoder needs input_dim == output_dim");
        break;
      case EncoderKind::affine:
        need(w1, output_dim * input_dim, "weight");
        need(b1, output_dim, "bias");
        break;
      case EncoderKind::hidden:
        if (hidden_dim == 0) throw DimensionError("hidden encoder needs hidden_dim > 0");
        need(w1, hidden_dim * input_dim, "w1");
        need(b1, hidden_dim, "b1");
        need(w2, output_dim * hidden_dim, "w2");
        need(b2, output_dim, "b2");
        break;
    }
  }
};

namespace detail {

inline std::vector<double> affine_map(const std::vector<double>& w, const std::vector<double>& b,
                                      std::span<const double> x) {
  const std::size_t rows = b.size(), cols = x.size();
  std::vector<double> y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = b[i];
    for (std::size_t j = 0; j < cols; ++j) acc += w[i * cols + j] * x[j];
    y[i] = acc;
  }
  return y;
}

}  // namespace detail

inline LatentVector encode(const Encoder& enc, std::span<const double> u) {
  if (u.size() != enc.input_dim)
    throw DimensionError("sensory vector has length " + std::to_string(u.size()) +
                         ", encoder expects " + std::to_string(enc.input_dim));
  if (!all_finite(u)) throw DataError("sensory vector has non-finite entries");
  LatentVector h;
  switch (enc.kind) {
    case EncoderKind::identity: h.assign(u.begin(), u.end()); break;
    case EncoderKind::affine: h = detail::affine_map(enc.w1, enc.b1, u); break;
    case EncoderKind::hidden: {
      auto z = detail::affine_map(enc.w1, enc.b1, u);
      for (double& x : z) x = std::tanh(x);
      h = detail::affine_map(enc.w2, enc.b2, z);
      break;
    }
  }
  if (enc.nonnegative_output)
    for (double& x : h) x = x < 0.0 ? 0.0 : x;
  return h;
}

struct Perception {
  LatentVector latent;
  std::optional<Engram> engram;
  std::vector<ScoredTriple> triples;
};

/// Encodes u, binds it as a new engram when memorable, and returns the top-k
/// triples of the episodic decoder with the time slot clamped to the encoding.
inline Perception perceive(const Encoder& enc, EpisodicModel& m, std::span<const double> u,
                           bool memorable, Beta beta, std::size_t top_k,
                           std::optional<std::string> label = std::nullopt,
                           std::size_t cap = kEnumerationCap) {
  if (enc.output_dim != m.config.rank)
    throw DimensionError("encoder output " + std::to_string(enc.output_dim) +
                         " does not match model rank " + std::to_string(m.config.rank));
  Perception out;
  out.latent = encode(enc, u);
  // decode first so a refused decode leaves the engram store untouched
  out.triples = decode_triples(m, out.latent, beta, cap).top(top_k);
  if (memorable) out.engram = bind_engram(m, out.latent, std::move(label));
  return out;
}

// --- file formats -----------------------------------------------------------

/// One vector per line, comma-separated decimals; blank lines skipped.
inline std::vector<SensoryVector> read_sensory(std::istream& in) {
  std::vector<SensoryVector> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    SensoryVector v;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(field, &used));
        if (field.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw DataError("sensory input line " + std::to_string(lineno) + ": bad number '" + field +
                        "'");
      }
    }
    if (!out.empty() && v.size() != out.front().size())
      throw DataError("sensory input line " + std::to_string(lineno) + ": " +
                      std::to_string(v.size()) + " values, previous lines have " +
                      std::to_string(out.front().size()));
    out.push_back(std::move(v));
  }
  return out;
}

inline std::vector<SensoryVector> read_sensory_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sensory input '" + path + "'");
  return read_sensory(in);
}

inline nlohmann::json encoder_to_json(const Encoder& e) {
  static const char* kinds[] = {"identity", "affine", "hidden"};
  return {{"kind", kinds[static_cast<int>(e.kind)]},
          {"input_dim", e.input_dim},
          {"hidden_dim", e.hidden_dim},
          {"output_dim", e.output_dim},
          {"w1", e.w1},
          {"b1", e.b1},
          {"w2", e.w2},
          {"b2", e.b2},
          {"nonnegative_output", e.nonnegative_output}};
}

inline Encoder encoder_from_json(const nlohmann::json& j) {
  try {
    Encoder e;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "identity") e.kind = EncoderKind::identity;
    else if (kind == "affine") e.kind = EncoderKind::affine;
    else if (kind == "hidden") e.kind = EncoderKind::hidden;
    else throw DataError("unknown encoder kind '" + kind + "'");
    e.input_dim = j.at("input_dim").get<std::size_t>();
    e.output_dim = j.at("output_dim").get<std::size_t>();
    e.hidden_dim = j.value("hidden_dim", std::size_t{0});
    e.w1 = j.value("w1", std::vector<double>{});
    e.b1 = j.value("b1", std::vector<double>{});
    e.w2 = j.value("w2", std::vector<double>{});
    e.b2 = j.value("b2", std::vector<double>{});
    e.nonnegative_output = j.value("nonnegative_output", false);
    e.validate();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("bad encoder description: ") + ex.what());
  }
}

}  // namespace engram
