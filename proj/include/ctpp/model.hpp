#ifndef CTPP_MODEL_HPP
#define CTPP_MODEL_HPP

#include <Eigen/Dense>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctpp/common.hpp"
#include "ctpp/decoder.hpp"
#include "ctpp/embedding.hpp"
#include "ctpp/encoder.hpp"
#include "ctpp/params.hpp"
#include "ctpp/prompt_pool.hpp"

namespace ctpp {

struct ModelConfig {
  int num_types = 5;   // E
  int type_dim = 32;   // D1
  int time_dim = 32;   // D2
  int layers = 2;
  int heads = 2;
  int te_scale = 64;   // time-encoding frequency spread
  int te_unit = 1;     // time-encoding base unit
  EncoderVariant encoder = EncoderVariant::attention;
  bool intensity_elapsed = false;
  int intensity_hidden = 0;  // 0 -> D

  int dim() const { return type_dim + time_dim; }

  void validate() const {
    if (num_types < 1) throw ConfigError("model: num_types must be >= 1");
    if (type_dim < 1 || time_dim < 1) {
      throw ConfigError("model: D1 and D2 must be >= 1");
    }
    if (layers < 1) throw ConfigError("model: layers must be >= 1");
    if (heads < 1 || dim() % heads != 0) {
      throw ConfigError("model: heads must divide D1+D2");
    }
    if (te_scale < 1 || te_unit < 1) {
      throw ConfigError("model: time-encoding hyperparameters must be >= 1");
    }
  }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"num_types", c.num_types}, {"D1", c.type_dim},
          {"D2", c.time_dim},         {"layers", c.layers},
          {"heads", c.heads},         {"te_scale", c.te_scale},
          {"te_unit", c.te_unit},     {"encoder", to_string(c.encoder)},
          {"intensity_elapsed", c.intensity_elapsed},
          {"intensity_hidden", c.intensity_hidden}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_types = j.at("num_types").get<int>();
  c.type_dim = j.at("D1").get<int>();
  c.time_dim = j.at("D2").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.te_scale = j.at("te_scale").get<int>();
  c.te_unit = j.at("te_unit").get<int>();
  c.encoder = encoder_variant_from_string(j.at("encoder").get<std::string>());
  c.intensity_elapsed = j.value("intensity_elapsed", false);
  c.intensity_hidden = j.value("intensity_hidden", 0);
  return c;
}

// Embedding tables, encoder, and decoder; the prompt pool lives alongside so
// prompt-free schemes can run the same model without one.
struct Model {
  ModelConfig cfg;
  EmbeddingTables embedding;
  EncoderParams encoder;
  DecoderParams decoder;

  void init(const ModelConfig& c, std::uint64_t seed) {
    c.validate();
    cfg = c;
    Rng rng(derive_seed(seed, seed_tag::model_init));
    embedding.init(c.num_types, c.type_dim,
                   TimeEncoding{c.time_dim, c.te_scale, c.te_unit}, rng);
    encoder.init(c.encoder, c.dim(), c.type_dim, c.layers, c.heads, rng);
    decoder.init(c.dim(), c.heads, c.num_types, rng, c.intensity_hidden,
                 c.intensity_elapsed);
  }

  ParamRefs params() {
    ParamRefs refs;
    embedding.collect(refs);
    encoder.collect(refs);
    decoder.collect(refs);
    return refs;
  }
};

inline ParamRefs all_params(Model& model, PromptPool* pool) {
  ParamRefs refs = model.params();
  if (pool != nullptr) pool->collect(refs);
  return refs;
}

namespace detail {

inline nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> flat(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat[r * m.cols() + c] = m(r, c);
  j["data"] = std::move(flat);
  return j;
}

inline void mat_from_json(const nlohmann::json& j, Mat& out) {
  Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ParseError("checkpoint: matrix payload size mismatch");
  }
  out.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = data[r * cols + c].get<double>();
}

}  // namespace detail

inline constexpr int kCheckpointVersion = 1;

// Full training state: parameters, optional pool, config, and rng state.
inline nlohmann::json checkpoint_to_json(Model& model, PromptPool* pool,
                                         const std::string& rng_state = "",
                                         const nlohmann::json& extra = {}) {
  nlohmann::json j;
  j["format"] = "ctpp-checkpoint";
  j["version"] = kCheckpointVersion;
  j["model_config"] = model_config_to_json(model.cfg);
  nlohmann::json params;
  for (const ParamRef& r : model.params()) {
    params[r.name] = detail::mat_to_json(r.param->value);
  }
  j["params"] = std::move(params);
  if (pool != nullptr) j["pool"] = pool_to_json(*pool);
  if (!rng_state.empty()) j["rng"] = rng_state;
  if (!extra.is_null() && !extra.empty()) j["extra"] = extra;
  return j;
}

struct Checkpoint {
  Model model;
  std::optional<PromptPool> pool;
  std::string rng_state;
  nlohmann::json extra;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ctpp-checkpoint") {
    throw ParseError("checkpoint: unrecognized format header");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version");
  }
  Checkpoint ck;
  ck.model.init(model_config_from_json(j.at("model_config")), 0);
  const auto& params = j.at("params");
  for (const ParamRef& r : ck.model.params()) {
    auto it = params.find(r.name);
    if (it == params.end()) {
      throw ParseError("checkpoint: missing parameter " + r.name);
    }
    detail::mat_from_json(*it, r.param->value);
    r.param->grad = Mat::Zero(r.param->value.rows(), r.param->value.cols());
  }
  if (j.contains("pool")) ck.pool = pool_from_json(j.at("pool"));
  ck.rng_state = j.value("rng", "");
  if (j.contains("extra")) ck.extra = j.at("extra");
  return ck;
}

inline void save_checkpoint(const std::string& path, Model& model,
                            PromptPool* pool, const std::string& rng_state = "",
                            const nlohmann::json& extra = {}) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << checkpoint_to_json(model, pool, rng_state, extra).dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError(path + ": malformed checkpoint JSON");
  return checkpoint_from_json(j);
}

}  // namespace ctpp

#endif  // CTPP_MODEL_HPP
