// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tnt/errors.hpp"
#include "tnt/tensor.hpp"

namespace tnt {

/// Flat line-oriented configuration: `[section]` headers, `key = value`
/// lines, `#` comments. Sections keep file order; later duplicate keys in a
/// section win. All diagnostics carry line numbers.
struct ConfigFile {
    struct Entry {
        std::string key, value;
        int line = 0;
    };
    struct Section {
        std::string header;
        int line = 0;
        std::vector<Entry> entries;

        const Entry* find(const std::string& key) const {
            const Entry* hit = nullptr;
            for (const auto& e : entries)
                if (e.key == key) hit = &e;
            return hit;
        }
        bool has(const std::string& key) const { return find(key) != nullptr; }
    };

    std::vector<Section> sections;
    std::string text;

    const Section* find_section(const std::string& header) const {
        for (const auto& s : sections)
            if (s.header == header) return &s;
        return nullptr;
    }

    static ConfigFile parse_text(const std::string& text) {
        ConfigFile cfg;
        cfg.text = text;
        std::istringstream in(text);
        std::string raw;
        int lineno = 0;
        Section* cur = nullptr;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        while (std::getline(in, raw)) {
            ++lineno;
            std::string line = trim(raw);
            if (line.empty() || line[0] == '#') continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("line " + std::to_string(lineno) +
                                      ": unterminated section header");
                cfg.sections.push_back({trim(line.substr(1, line.size() - 2)), lineno, {}});
                cur = &cfg.sections.back();
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
            if (!cur)
                throw ConfigError("line " + std::to_string(lineno) +
                                  ": key outside of any [section]");
            cur->entries.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno});
        }
        return cfg;
    }

    static ConfigFile parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file: " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse_text(ss.str());
    }
};

namespace cfg_detail {

inline double parse_double(const ConfigFile::Entry& e) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("line " + std::to_string(e.line) + ": field '" + e.key +
                          "' expects a number, got '" + e.value + "'");
    }
}

inline std::size_t parse_size(const ConfigFile::Entry& e) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(e.value, &pos);
        if (pos != e.value.size() || v < 0) throw std::invalid_argument("");
        return static_cast<std::size_t>(v);
    } catch (...) {
        throw ConfigError("line " + std::to_string(e.line) + ": field '" + e.key +
                          "' expects a non-negative integer, got '" + e.value + "'");
    }
}

inline bool parse_bool(const ConfigFile::Entry& e) {
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    throw ConfigError("line " + std::to_string(e.line) + ": field '" + e.key +
                      "' expects true/false");
}

inline Shape parse_factors(const ConfigFile::Entry& e) {
    Shape out;
    std::stringstream ss(e.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        ConfigFile::Entry fake{e.key, item, e.line};
        out.push_back(parse_size(fake));
        if (out.back() == 0)
            throw ConfigError("line " + std::to_string(e.line) + ": zero factor in '" + e.key +
                              "'");
    }
    if (out.empty())
        throw ConfigError("line " + std::to_string(e.line) + ": empty factor list '" + e.key +
                          "'");
    return out;
}

/// "auto" or a number.
struct AutoOr {
    bool is_auto = true;
    double value = 0.0;
};

inline AutoOr parse_auto_or(const ConfigFile::Entry& e) {
    if (e.value == "auto") return {};
    return {false, parse_double(e)};
}

}  // namespace cfg_detail

struct LayerSpec {
    std::string name;
    std::string kind;  // tt_linear | ttm_embedding | dense | gelu | identity
    Shape in_factors, out_factors;   // tt_linear
    Shape row_factors, col_factors;  // ttm_embedding
    std::size_t rank = 0;
    std::size_t in = 0, out = 0;  // dense
};

struct RunConfig {
    // run
    std::string task;  // planted_regression | gmm_classification | toy_recommender
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    // model
    std::vector<LayerSpec> layers;
    std::string head = "mse";

    // task parameters
    std::size_t n_train = 512, n_test = 256;
    Shape task_in_factors, task_out_factors;  // planted_regression generator
    std::size_t planted_rank = 2;
    double noise_sigma = 0.1;
    std::size_t dim = 16, classes = 4;  // gmm
    double spread = 2.0;
    Shape row_factors, col_factors;  // recommender table geometry

    // training
    std::size_t early_epochs = 0, late_epochs = 0;
    std::size_t batch_size = 32;
    std::string optimizer = "adam";
    double lr = 0.01;
    double gamma = 0.0, beta = 0.0, rho = 1e-3;
    cfg_detail::AutoOr w1, w2, l0, s0;
    double s0_ratio = 0.0;  // used when s0 is auto and ratio > 0
    double epsilon = 0.05;
    bool epsilon_relative = true;
    bool prune_each_epoch = false;
    bool proximal_diag_update = false;

    std::string config_text;

    static RunConfig from_file(const std::string& path) {
        return from_config(ConfigFile::parse_file(path));
    }

    static RunConfig from_text(const std::string& text) {
        return from_config(ConfigFile::parse_text(text));
    }

    static RunConfig from_config(const ConfigFile& file);
};

inline RunConfig RunConfig::from_config(const ConfigFile& file) {
    using namespace cfg_detail;
    RunConfig cfg;
    cfg.config_text = file.text;

    const auto* run = file.find_section("run");
    if (!run) throw ConfigError("missing [run] section");
    if (const auto* e = run->find("task"))
        cfg.task = e->value;
    else
        throw ConfigError("[run] needs task");
    if (const auto* e = run->find("seed")) cfg.seed = parse_size(*e);
    if (const auto* e = run->find("out")) cfg.out_dir = e->value;

    for (const auto& sec : file.sections) {
        if (sec.header.rfind("layer ", 0) != 0) continue;
        LayerSpec spec;
        spec.name = sec.header.substr(6);
        if (spec.name.empty())
            throw ConfigError("line " + std::to_string(sec.line) + ": layer section needs a name");
        const auto* kind = sec.find("kind");
        if (!kind)
            throw ConfigError("line " + std::to_string(sec.line) + ": [layer " + spec.name +
                              "] needs kind");
        spec.kind = kind->value;
        if (spec.kind == "tt_linear") {
            const auto* inf = sec.find("in_factors");
            const auto* outf = sec.find("out_factors");
            const auto* rank = sec.find("rank");
            if (!inf || !outf || !rank)
                throw ConfigError("line " + std::to_string(sec.line) +
                                  ": tt_linear needs in_factors, out_factors, rank");
            spec.in_factors = parse_factors(*inf);
            spec.out_factors = parse_factors(*outf);
            spec.rank = parse_size(*rank);
            if (spec.rank == 0)
                throw ConfigError("line " + std::to_string(rank->line) + ": rank must be >= 1");
        } else if (spec.kind == "ttm_embedding") {
            const auto* rf = sec.find("row_factors");
            const auto* cf = sec.find("col_factors");
            const auto* rank = sec.find("rank");
            if (!rf || !cf || !rank)
                throw ConfigError("line " + std::to_string(sec.line) +
                                  ": ttm_embedding needs row_factors, col_factors, rank");
            spec.row_factors = parse_factors(*rf);
            spec.col_factors = parse_factors(*cf);
            spec.rank = parse_size(*rank);
            if (spec.row_factors.size() != spec.col_factors.size())
                throw ConfigError("line " + std::to_string(sec.line) +
                                  ": row/col factor counts must match");
        } else if (spec.kind == "dense") {
            const auto* in = sec.find("in");
            const auto* out = sec.find("out");
            if (!in || !out)
                throw ConfigError("line " + std::to_string(sec.line) + ": dense needs in, out");
            spec.in = parse_size(*in);
            spec.out = parse_size(*out);
        } else if (spec.kind != "gelu" && spec.kind != "identity") {
            throw ConfigError("line " + std::to_string(kind->line) + ": unknown layer kind '" +
                              spec.kind + "'");
        }
        cfg.layers.push_back(std::move(spec));
    }

    if (const auto* head = file.find_section("head")) {
        if (const auto* e = head->find("loss")) cfg.head = e->value;
    }
    if (cfg.head != "mse" && cfg.head != "softmax_ce" && cfg.head != "bce")
        throw ConfigError("unknown head loss '" + cfg.head + "'");

    if (const auto* task = file.find_section("task")) {
        if (const auto* e = task->find("n_train")) cfg.n_train = parse_size(*e);
        if (const auto* e = task->find("n_test")) cfg.n_test = parse_size(*e);
        if (const auto* e = task->find("in_factors")) cfg.task_in_factors = parse_factors(*e);
        if (const auto* e = task->find("out_factors")) cfg.task_out_factors = parse_factors(*e);
        if (const auto* e = task->find("planted_rank")) cfg.planted_rank = parse_size(*e);
        if (const auto* e = task->find("noise_sigma")) cfg.noise_sigma = parse_double(*e);
        if (const auto* e = task->find("dim")) cfg.dim = parse_size(*e);
        if (const auto* e = task->find("classes")) cfg.classes = parse_size(*e);
        if (const auto* e = task->find("spread")) cfg.spread = parse_double(*e);
        if (const auto* e = task->find("row_factors")) cfg.row_factors = parse_factors(*e);
        if (const auto* e = task->find("col_factors")) cfg.col_factors = parse_factors(*e);
    }

    if (const auto* tr = file.find_section("train")) {
        if (const auto* e = tr->find("early_epochs")) cfg.early_epochs = parse_size(*e);
        if (const auto* e = tr->find("late_epochs")) cfg.late_epochs = parse_size(*e);
        if (const auto* e = tr->find("batch_size")) cfg.batch_size = parse_size(*e);
        if (const auto* e = tr->find("optimizer")) cfg.optimizer = e->value;
        if (const auto* e = tr->find("lr")) cfg.lr = parse_double(*e);
        if (const auto* e = tr->find("gamma")) cfg.gamma = parse_double(*e);
        if (const auto* e = tr->find("beta")) cfg.beta = parse_double(*e);
        if (const auto* e = tr->find("rho")) cfg.rho = parse_double(*e);
        if (const auto* e = tr->find("w1")) cfg.w1 = parse_auto_or(*e);
        if (const auto* e = tr->find("w2")) cfg.w2 = parse_auto_or(*e);
        if (const auto* e = tr->find("l0")) cfg.l0 = parse_auto_or(*e);
        if (const auto* e = tr->find("s0")) cfg.s0 = parse_auto_or(*e);
        if (const auto* e = tr->find("s0_ratio")) cfg.s0_ratio = parse_double(*e);
        if (const auto* e = tr->find("epsilon")) cfg.epsilon = parse_double(*e);
        if (const auto* e = tr->find("epsilon_mode")) {
            if (e->value == "relative")
                cfg.epsilon_relative = true;
            else if (e->value == "absolute")
                cfg.epsilon_relative = false;
            else
                throw ConfigError("line " + std::to_string(e->line) +
                                  ": epsilon_mode is 'relative' or 'absolute'");
        }
        if (const auto* e = tr->find("prune_each_epoch")) cfg.prune_each_epoch = parse_bool(*e);
        if (const auto* e = tr->find("proximal_diag_update"))
            cfg.proximal_diag_update = parse_bool(*e);
    }

    if (cfg.optimizer != "adam" && cfg.optimizer != "sgd")
        throw ConfigError("unknown optimizer '" + cfg.optimizer + "'");
    if (cfg.task != "planted_regression" && cfg.task != "gmm_classification" &&
        cfg.task != "toy_recommender")
        throw ConfigError("unknown task '" + cfg.task + "'");
    if (cfg.layers.empty()) throw ConfigError("no [layer ...] sections given");
    return cfg;
}

}  // namespace tnt
