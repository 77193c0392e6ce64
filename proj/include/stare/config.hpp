#pragma once

#include <string>
#include <vector>

#include "stare/model.hpp"
#include "stare/pipeline.hpp"
#include "stare/training.hpp"

namespace stare {

// Flat dotted-key configuration shared by every subcommand. Defaults are the
// selected hyperparameter values. Unknown keys are rejected with the key name.
struct RunConfig {
    std::uint64_t seed = 42;
    std::string output_dir = "out";

    std::string dataset_dir = "data/toy";
    std::string dataset_train;  // explicit file overrides; empty = dir/train.txt
    std::string dataset_valid;
    std::string dataset_test;

    ModelConfig model;

    TrainConfig train;

    std::string eval_split = "test";  // valid | test
    std::size_t eval_batch = 128;
    std::string eval_checkpoint;  // empty = output_dir/checkpoint_final.txt

    std::string preprocess_mode = "clean";  // clean | ratio | truncate | triples
    double preprocess_ratio = 0.33;
    std::size_t preprocess_truncate_n = 2;
    std::string preprocess_literal_mode = "none";  // none | drop_statement | drop_qualifier
    std::string preprocess_literal_pattern;        // empty = default detector
    std::size_t preprocess_rarity_min = 0;         // 0 = off
    bool preprocess_rarity_fixed_point = true;

    double gradcheck_tolerance = 1e-4;
    double gradcheck_step = 1e-5;
    std::size_t gradcheck_batch = 8;

    std::string train_file() const {
        return dataset_train.empty() ? dataset_dir + "/train.txt" : dataset_train;
    }
    std::string valid_file() const {
        return dataset_valid.empty() ? dataset_dir + "/valid.txt" : dataset_valid;
    }
    std::string test_file() const {
        return dataset_test.empty() ? dataset_dir + "/test.txt" : dataset_test;
    }
    std::string checkpoint_file() const {
        return eval_checkpoint.empty() ? output_dir + "/checkpoint_final.txt" : eval_checkpoint;
    }

    // `key = value` lines, '#' comments. Throws ConfigError on unknown keys or
    // bad values.
    void apply_file(const std::string& path);
    void apply_override(const std::string& key_equals_value);
    void apply(const std::string& key, const std::string& value);

    static std::vector<std::string> known_keys();
};

}  // namespace stare
