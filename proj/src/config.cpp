#include "stare/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

namespace stare {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key, "expected a boolean for " + key + ", got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key, "expected an unsigned integer for " + key + ", got '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(out)) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key, "expected a finite number for " + key + ", got '" + v + "'");
    }
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"seed",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.seed = parse_size(k, v);
             c.model.seed = c.seed;
             c.train.seed = c.seed;
         }},
        {"output.dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
        {"dataset.dir", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_dir = v; }},
        {"dataset.train", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_train = v; }},
        {"dataset.valid", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_valid = v; }},
        {"dataset.test", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_test = v; }},
        {"model.dim",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.encoder.dim = parse_size(k, v);
         }},
        {"model.encoder",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v == "stare")
                 c.model.use_encoder = true;
             else if (v == "none")
                 c.model.use_encoder = false;
             else
                 throw ConfigError(k, "model.encoder must be 'stare' or 'none'");
         }},
        {"model.triple_mode",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.triple_mode = parse_bool(k, v);
         }},
        {"model.encoder.layers",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.encoder.num_layers = parse_size(k, v);
         }},
        {"model.encoder.phi_r",
         [](RunConfig& c, const std::string&, const std::string& v) {
             c.model.encoder.phi_r = phi_kind_from_string(v);
         }},
        {"model.encoder.phi_q",
         [](RunConfig& c, const std::string&, const std::string& v) {
             c.model.encoder.phi_q = phi_kind_from_string(v);
         }},
        {"model.encoder.gamma",
         [](RunConfig& c, const std::string&, const std::string& v) {
             c.model.encoder.gamma_kind = gamma_kind_from_string(v);
         }},
        {"model.encoder.alpha",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             double a = parse_double(k, v);
             if (a < 0.0 || a > 1.0) throw ConfigError(k, "alpha must be in [0,1]");
             c.model.encoder.alpha = a;
         }},
        {"model.encoder.qual_aggregation",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v == "sum")
                 c.model.encoder.qual_aggregation = QualAggregation::Sum;
             else if (v == "mean")
                 c.model.encoder.qual_aggregation = QualAggregation::Mean;
             else
                 throw ConfigError(k, "qual_aggregation must be 'sum' or 'mean'");
         }},
        {"model.encoder.dropout",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.encoder.dropout = parse_double(k, v);
         }},
        {"model.encoder.activation",
         [](RunConfig& c, const std::string&, const std::string& v) {
             c.model.encoder.activation = activation_from_string(v);
         }},
        {"model.encoder.degree_mean",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.encoder.degree_mean = parse_bool(k, v);
         }},
        {"model.decoder",
         [](RunConfig& c, const std::string&, const std::string& v) {
             c.model.decoder.kind = decoder_kind_from_string(v);
         }},
        {"model.decoder.layers",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.decoder.layers = parse_size(k, v);
         }},
        {"model.decoder.hidden",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.decoder.hidden = parse_size(k, v);
         }},
        {"model.decoder.heads",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.decoder.heads = parse_size(k, v);
         }},
        {"model.decoder.dropout",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.decoder.dropout = parse_double(k, v);
         }},
        {"model.decoder.filters",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.decoder.filters = parse_size(k, v);
         }},
        {"model.decoder.kernel_h",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.decoder.kernel_h = parse_size(k, v);
         }},
        {"model.decoder.kernel_w",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.decoder.kernel_w = parse_size(k, v);
         }},
        {"model.decoder.image_h",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.decoder.image_h = parse_size(k, v);
         }},
        {"model.decoder.image_w",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.decoder.image_w = parse_size(k, v);
         }},
        {"model.max_len",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.decoder.max_len = parse_size(k, v);
         }},
        {"train.epochs",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.train.epochs = parse_size(k, v);
         }},
        {"train.batch",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.train.batch_size = parse_size(k, v);
             if (c.train.batch_size == 0) throw ConfigError(k, "batch size must be positive");
         }},
        {"train.lr",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.train.learning_rate = parse_double(k, v);
         }},
        {"train.label_smoothing",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             double e = parse_double(k, v);
             if (e < 0.0 || e >= 1.0) throw ConfigError(k, "label smoothing must be in [0,1)");
             c.train.label_smoothing = e;
         }},
        {"train.checkpoint_every",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.train.checkpoint_every = parse_size(k, v);
         }},
        {"eval.split",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v != "valid" && v != "test") throw ConfigError(k, "eval.split must be valid|test");
             c.eval_split = v;
         }},
        {"eval.batch",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.eval_batch = parse_size(k, v);
         }},
        {"eval.checkpoint",
         [](RunConfig& c, const std::string&, const std::string& v) { c.eval_checkpoint = v; }},
        {"preprocess.mode",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v != "clean" && v != "ratio" && v != "truncate" && v != "triples")
                 throw ConfigError(k, "preprocess.mode must be clean|ratio|truncate|triples");
             c.preprocess_mode = v;
         }},
        {"preprocess.ratio",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.preprocess_ratio = parse_double(k, v);
         }},
        {"preprocess.truncate_n",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.preprocess_truncate_n = parse_size(k, v);
         }},
        {"preprocess.literal_mode",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v != "none" && v != "drop_statement" && v != "drop_qualifier")
                 throw ConfigError(k,
                                   "preprocess.literal_mode must be none|drop_statement|drop_qualifier");
             c.preprocess_literal_mode = v;
         }},
        {"preprocess.literal_pattern",
         [](RunConfig& c, const std::string&, const std::string& v) {
             c.preprocess_literal_pattern = v;
         }},
        {"preprocess.rarity_min",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.preprocess_rarity_min = parse_size(k, v);
         }},
        {"preprocess.rarity_fixed_point",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.preprocess_rarity_fixed_point = parse_bool(k, v);
         }},
        {"gradcheck.tolerance",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.gradcheck_tolerance = parse_double(k, v);
         }},
        {"gradcheck.step",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.gradcheck_step = parse_double(k, v);
         }},
        {"gradcheck.batch",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.gradcheck_batch = parse_size(k, v);
         }},
    };
    return table;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(key, "unknown configuration key: " + key);
    it->second(*this, key, value);
}

void RunConfig::apply_override(const std::string& kv) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
        throw ConfigError(kv, "override must look like key=value, got '" + kv + "'");
    apply(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

void RunConfig::apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        apply_override(line);
    }
}

std::vector<std::string> RunConfig::known_keys() {
    std::vector<std::string> keys;
    keys.reserve(setters().size());
    for (const auto& [k, fn] : setters()) keys.push_back(k);
    return keys;
}

}  // namespace stare
