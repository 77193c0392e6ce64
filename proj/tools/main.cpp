#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "stare/config.hpp"
#include "stare/evaluation.hpp"
#include "stare/graph.hpp"
#include "stare/model.hpp"
#include "stare/pipeline.hpp"
#include "stare/training.hpp"

namespace fs = std::filesystem;
using namespace stare;

namespace {

RunConfig load_config(const std::string& config_path,
                      const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!config_path.empty()) cfg.apply_file(config_path);
    if (const char* env = std::getenv("STARE_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
    for (const auto& kv : overrides) cfg.apply_override(kv);
    return cfg;
}

void ensure_output_dir(const RunConfig& cfg) {
    fs::create_directories(cfg.output_dir);
}

struct LoadedData {
    Split raw;
    Vocabulary vocab;  // over train ∪ valid ∪ test so every rankable entity has a row
    std::vector<Statement> train, valid, test;
};

LoadedData load_dataset(const RunConfig& cfg) {
    LoadedData d;
    d.raw = load_split(cfg.train_file(), cfg.valid_file(), cfg.test_file());
    std::vector<RawStatement> all = d.raw.train;
    all.insert(all.end(), d.raw.valid.begin(), d.raw.valid.end());
    all.insert(all.end(), d.raw.test.begin(), d.raw.test.end());
    d.vocab = build_vocabulary(all);
    d.train = encode_statements(d.raw.train, d.vocab);
    d.valid = encode_statements(d.raw.valid, d.vocab);
    d.test = encode_statements(d.raw.test, d.vocab);
    return d;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << text;
}

int run_preprocess(const RunConfig& cfg) {
    ensure_output_dir(cfg);
    Split split = load_split(cfg.train_file(), cfg.valid_file(), cfg.test_file());
    std::ostringstream report;

    if (cfg.preprocess_mode == "clean") {
        if (cfg.preprocess_literal_mode != "none") {
            LiteralDetector detector = cfg.preprocess_literal_pattern.empty()
                                           ? LiteralDetector()
                                           : LiteralDetector(cfg.preprocess_literal_pattern);
            LiteralMode mode = cfg.preprocess_literal_mode == "drop_statement"
                                   ? LiteralMode::DropStatement
                                   : LiteralMode::DropQualifier;
            for (auto* part : {&split.train, &split.valid, &split.test}) {
                std::size_t before = part->size();
                *part = strip_literal_statements(*part, detector, mode);
                report << "literal filter removed " << before - part->size()
                       << " statements\n";
            }
        }
        if (cfg.preprocess_rarity_min > 0) {
            std::size_t dropped = rarity_filter_split(split, cfg.preprocess_rarity_min,
                                                      cfg.preprocess_rarity_fixed_point);
            report << "rarity filter removed " << dropped << " statements\n";
        }
        LeakageReport leak = remove_leakage(split);
        report << "leakage removal dropped " << leak.removed_from_train << " train / "
               << leak.removed_from_valid << " valid statements\n";
        UnseenReport unseen = filter_unseen(split);
        report << "unseen filter dropped " << unseen.removed_from_test << " test statements\n";
        report << "post-clean leakage audit: " << count_leakage(split) << "\n";
    } else if (cfg.preprocess_mode == "ratio") {
        split.train = sample_by_qualifier_ratio(split.train, cfg.preprocess_ratio, cfg.seed);
        split.valid = sample_by_qualifier_ratio(split.valid, cfg.preprocess_ratio, cfg.seed + 1);
        split.test = sample_by_qualifier_ratio(split.test, cfg.preprocess_ratio, cfg.seed + 2);
        report << "sampled to qualifier ratio " << cfg.preprocess_ratio << "\n";
    } else if (cfg.preprocess_mode == "truncate") {
        split.train = truncate_qualifiers(split.train, cfg.preprocess_truncate_n, cfg.seed);
        split.valid = truncate_qualifiers(split.valid, cfg.preprocess_truncate_n, cfg.seed + 1);
        split.test = truncate_qualifiers(split.test, cfg.preprocess_truncate_n, cfg.seed + 2);
        report << "truncated statements to at most " << cfg.preprocess_truncate_n
               << " qualifiers\n";
    } else {  // triples
        split.train = reduce_to_triples(split.train);
        split.valid = reduce_to_triples(split.valid);
        split.test = reduce_to_triples(split.test);
        report << "reduced statements to distinct main triples\n";
    }

    write_statements(cfg.output_dir + "/train.txt", split.train);
    write_statements(cfg.output_dir + "/valid.txt", split.valid);
    write_statements(cfg.output_dir + "/test.txt", split.test);
    report << "train/valid/test sizes: " << split.train.size() << " / " << split.valid.size()
           << " / " << split.test.size() << "\n";
    std::cout << report.str();
    write_text(cfg.output_dir + "/preprocess_report.txt", report.str());
    return 0;
}

int run_stats(const RunConfig& cfg) {
    ensure_output_dir(cfg);
    Split split = load_split(cfg.train_file(), cfg.valid_file(), cfg.test_file());
    DatasetStats stats = compute_stats(split);
    std::string table = stats_table(stats);
    std::cout << table;
    write_text(cfg.output_dir + "/stats.txt", table);
    write_text(cfg.output_dir + "/stats.records", stats_records(stats));
    return 0;
}

int run_train(const RunConfig& cfg) {
    ensure_output_dir(cfg);
    LoadedData data = load_dataset(cfg);
    LinkPredictionModel model(data.train, data.vocab, cfg.model);
    TrainConfig tc = cfg.train;
    tc.checkpoint_dir = cfg.output_dir;
    std::ofstream log(cfg.output_dir + "/train.log");
    if (!log) throw Error("cannot open train log in " + cfg.output_dir);
    auto history = train(model, tc, &log);
    std::cout << "trained " << history.size() << " epochs";
    if (!history.empty()) std::cout << ", final loss " << history.back().mean_loss;
    std::cout << "\ncheckpoint: " << cfg.output_dir << "/checkpoint_final.txt\n";
    return 0;
}

int run_evaluate(const RunConfig& cfg) {
    ensure_output_dir(cfg);
    LoadedData data = load_dataset(cfg);
    LinkPredictionModel model(data.train, data.vocab, cfg.model);
    ParamMap loaded = load_params(cfg.checkpoint_file());
    for (const auto& [name, tensor] : model.params) {
        auto it = loaded.find(name);
        if (it == loaded.end()) throw Error("checkpoint is missing parameter " + name);
        if (!it->second.same_shape(tensor))
            throw Error("checkpoint shape mismatch for " + name);
    }
    model.params = std::move(loaded);
    model.invalidate_cache();
    auto f_train = model.filter_statements(data.train);
    auto f_valid = model.filter_statements(data.valid);
    auto f_test = model.filter_statements(data.test);
    FilterIndex filter = build_filter_index({&f_train, &f_valid, &f_test}, model.vocab);
    const auto& eval_set = cfg.eval_split == "valid" ? data.valid : data.test;
    RankReport report = evaluate_model(model, eval_set, filter, cfg.eval_batch);
    std::string table = metrics_table(report);
    std::cout << table;
    write_text(cfg.output_dir + "/metrics_" + cfg.eval_split + ".txt", table);
    write_text(cfg.output_dir + "/metrics_" + cfg.eval_split + ".records",
               metrics_records(report));
    return 0;
}

int run_gradcheck(const RunConfig& cfg) {
    ensure_output_dir(cfg);
    LoadedData data = load_dataset(cfg);
    LinkPredictionModel model(data.train, data.vocab, cfg.model);
    LabelIndex index(model.augmented, 2 * model.num_base_facts);
    std::vector<Query> queries = model.training_queries();
    if (queries.size() > cfg.gradcheck_batch) queries.resize(cfg.gradcheck_batch);
    GradCheckReport report =
        grad_check(model, queries, index, cfg.train.label_smoothing, cfg.gradcheck_step);
    std::ostringstream out;
    for (const auto& e : report.entries)
        out << e.name << "\t" << e.max_rel_err << "\n";
    out << "worst\t" << report.worst << "\n";
    std::cout << out.str();
    write_text(cfg.output_dir + "/gradcheck.txt", out.str());
    if (report.worst > cfg.gradcheck_tolerance) {
        std::cerr << "gradient check failed: " << report.worst << " > tolerance "
                  << cfg.gradcheck_tolerance << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hyper-relational knowledge graph link prediction toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string mode_flag, split_flag;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "configuration file (key = value lines)");
        sub->add_option("overrides", overrides, "key=value configuration overrides");
    };

    CLI::App* pre = app.add_subcommand("preprocess", "clean a dataset or derive a variant");
    add_common(pre);
    pre->add_option("--mode", mode_flag, "clean|ratio|truncate|triples");

    CLI::App* stats = app.add_subcommand("stats", "dataset statistics and leakage audits");
    add_common(stats);

    CLI::App* tr = app.add_subcommand("train", "train a link prediction model");
    add_common(tr);

    CLI::App* ev = app.add_subcommand("evaluate", "filtered ranking evaluation");
    add_common(ev);
    ev->add_option("--split", split_flag, "valid|test");

    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_common(gc);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = load_config(config_path, overrides);
        if (!mode_flag.empty()) cfg.apply("preprocess.mode", mode_flag);
        if (!split_flag.empty()) cfg.apply("eval.split", split_flag);
        if (pre->parsed()) return run_preprocess(cfg);
        if (stats->parsed()) return run_stats(cfg);
        if (tr->parsed()) return run_train(cfg);
        if (ev->parsed()) return run_evaluate(cfg);
        if (gc->parsed()) return run_gradcheck(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error (" << e.key << "): " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
