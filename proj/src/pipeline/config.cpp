#include <cmath>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "biaslab/pipeline.hpp"

namespace biaslab::pipeline {

namespace {

nlohmann::json toml_to_json(const toml::node& node) {
  if (const auto* table = node.as_table()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [key, value] : *table) out[std::string(key.str())] = toml_to_json(value);
    return out;
  }
  if (const auto* array = node.as_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& value : *array) out.push_back(toml_to_json(value));
    return out;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  throw corpus::ConfigurationError("unsupported TOML value type in experiment config");
}

fs::path resolve(const fs::path& base, const std::string& value) {
  const fs::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

void require_readable(const fs::path& path, std::string_view what) {
  std::ifstream in(path);
  if (!in) throw InputError(std::string(what) + " '" + path.string() + "' is not readable");
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  const std::string text = corpus::read_text_file(path);
  nlohmann::json j;
  try {
    if (path.extension() == ".toml") {
      j = toml_to_json(toml::parse(text, path.string()));
    } else {
      j = nlohmann::json::parse(text);
    }
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "cannot parse config '" << path.string() << "': " << e.description() << " (line "
        << e.source().begin.line << ")";
    throw corpus::ConfigurationError(msg.str());
  } catch (const nlohmann::json::exception& e) {
    throw corpus::ConfigurationError("cannot parse config '" + path.string() + "': " + e.what());
  }
  return from_json(j, path.parent_path());
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    const auto& corp = j.at("corpus");
    c.train_path = resolve(base_dir, corp.at("train").get<std::string>());
    if (corp.contains("valid")) c.valid_path = resolve(base_dir, corp.at("valid").get<std::string>());
    if (corp.contains("test")) c.test_path = resolve(base_dir, corp.at("test").get<std::string>());
    if (corp.contains("scheme")) c.scheme = corpus::parse_scheme(corp.at("scheme").get<std::string>());
    if (corp.contains("subsample")) c.subsample_factor = corp.at("subsample").get<std::uint32_t>();
    c.defining_sets = resolve(base_dir, j.at("defining_sets").get<std::string>());
    if (j.contains("stop_words")) c.stop_words = resolve(base_dir, j.at("stop_words").get<std::string>());

    if (j.contains("context")) {
      const auto& ctx = j.at("context");
      if (ctx.contains("schemes")) {
        c.use_fixed = c.use_exponential = false;
        for (const auto& s : ctx.at("schemes")) {
          const auto name = s.get<std::string>();
          if (name == "fixed") c.use_fixed = true;
          else if (name == "exponential" || name == "infinite") c.use_exponential = true;
          else throw corpus::ConfigurationError("unknown context scheme '" + name + "'");
        }
      }
      c.window = ctx.value("window", c.window);
      c.adjacent_weight = ctx.value("adjacent_weight", c.adjacent_weight);
      c.decay = ctx.value("decay", c.decay);
    }
    if (j.contains("lambdas")) c.lambdas = j.at("lambdas").get<std::vector<double>>();
    if (j.contains("model")) {
      nlohmann::json m = c.model;
      m.update(j.at("model"), true);
      c.model = m.get<langmodel::LMConfig>();
    }
    if (j.contains("generation")) {
      nlohmann::json g = c.generation;
      g.update(j.at("generation"), true);
      c.generation = g.get<langmodel::GenerationConfig>();
    }
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw corpus::ConfigurationError(std::string("invalid experiment config: ") + e.what());
  }
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json schemes = nlohmann::json::array();
  if (use_fixed) schemes.push_back("fixed");
  if (use_exponential) schemes.push_back("exponential");
  return {
      {"corpus",
       {{"train", train_path.string()},
        {"valid", valid_path.string()},
        {"test", test_path.string()},
        {"scheme", std::string(corpus::scheme_name(scheme))},
        {"subsample", subsample_factor}}},
      {"defining_sets", defining_sets.string()},
      {"stop_words", stop_words.string()},
      {"context", {{"schemes", schemes}, {"window", window}, {"adjacent_weight", adjacent_weight}, {"decay", decay}}},
      {"lambdas", lambdas},
      {"model", model},
      {"generation", generation},
      {"output_dir", output_dir.string()},
      {"seed", seed},
  };
}

void ExperimentConfig::validate() const {
  require_readable(train_path, "training corpus");
  if (!valid_path.empty()) require_readable(valid_path, "validation corpus");
  if (!test_path.empty()) require_readable(test_path, "test corpus");
  require_readable(defining_sets, "defining-set file");
  if (!stop_words.empty()) require_readable(stop_words, "stop-word file");
  if (lambdas.empty()) throw corpus::ConfigurationError("lambda sweep is empty");
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw corpus::ConfigurationError("lambda values must be finite and non-negative");
    }
  }
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (lambdas[i] == lambdas[j]) throw corpus::ConfigurationError("lambda sweep lists a value twice");
    }
  }
  if (!use_fixed && !use_exponential) throw corpus::ConfigurationError("no context scheme selected");
  if (subsample_factor == 0) throw corpus::ConfigurationError("subsample factor must be positive");
  (void)context_schemes();
  model.validate();
  generation.validate();
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec || !fs::is_directory(output_dir)) {
    throw InputError("output directory '" + output_dir.string() + "' is not writable");
  }
}

std::vector<biasmeter::ContextScheme> ExperimentConfig::context_schemes() const {
  std::vector<biasmeter::ContextScheme> out;
  if (use_fixed) out.push_back(biasmeter::ContextScheme::fixed(window));
  if (use_exponential) out.push_back(biasmeter::ContextScheme::exponential(adjacent_weight, decay));
  return out;
}

void ExperimentConfig::select_schemes(std::string_view which) {
  if (which == "fixed") {
    use_fixed = true;
    use_exponential = false;
  } else if (which == "exponential" || which == "infinite") {
    use_fixed = false;
    use_exponential = true;
  } else if (which == "both") {
    use_fixed = use_exponential = true;
  } else {
    throw corpus::ConfigurationError("--scheme must be fixed, exponential or both");
  }
}

}  // namespace biaslab::pipeline
