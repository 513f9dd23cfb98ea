// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: train / eval / inspect-ranks / plan-path / bench.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "tnt/tnt.hpp"

namespace {

using namespace tnt;

int cmd_train(const std::string& config_path, const std::string& out_override,
              long long seed_override) {
    RunConfig cfg = RunConfig::from_file(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);

    RunResult res = run_training(cfg);
    std::printf("task            : %s\n", cfg.task.c_str());
    std::printf("seed            : %llu\n", static_cast<unsigned long long>(cfg.seed));
    std::printf("eval metric     : %.6g\n", res.final_eval);
    std::printf("size (S_eps)    : %zu\n", res.final_sizes.exact);
    std::printf("total params    : %zu\n", res.final_sizes.total_current());
    std::printf("dense equivalent: %zu\n", res.final_sizes.dense_equivalent);
    std::printf("compression     : %.3gx\n", res.final_sizes.compression_ratio());
    for (const auto& name : res.late_prune.removable_layers)
        std::printf("removable layer : %s\n", name.c_str());
    std::printf("metrics         : %s\n", res.metrics_path.c_str());
    std::printf("checkpoint      : %s\n", res.checkpoint_path.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt_path) {
    LoadedCheckpoint ck = load_checkpoint(ckpt_path);
    RunConfig cfg = RunConfig::from_text(ck.meta.config_text);
    cfg.seed = ck.meta.seed;
    TaskData data = build_task(cfg);
    const double metric = eval_model(ck.model, data.test);
    RankTrainState state;
    state.epsilon = cfg.epsilon;
    state.epsilon_relative = cfg.epsilon_relative;
    ModelSizes sizes = model_sizes(ck.model, state);
    std::printf("task            : %s\n", ck.meta.task.c_str());
    std::printf("eval metric     : %.6g\n", metric);
    std::printf("size (S_eps)    : %zu\n", sizes.exact);
    std::printf("total params    : %zu\n", sizes.total_current());
    std::printf("compression     : %.3gx\n", sizes.compression_ratio());
    return 0;
}

void print_rank_row(const std::string& name, const std::string& kind,
                    const std::vector<std::size_t>& chain) {
    std::string ranks = "(";
    for (std::size_t i = 0; i < chain.size(); ++i)
        ranks += (i ? "," : "") + std::to_string(chain[i]);
    ranks += ")";
    bool removable = false;
    for (std::size_t i = 1; i + 1 < chain.size(); ++i) removable |= chain[i] == 0;
    std::printf("%-16s %-14s %-24s %s\n", name.c_str(), kind.c_str(), ranks.c_str(),
                removable ? "removable" : "");
}

void inspect_layers(std::vector<std::unique_ptr<Layer>>& layers) {
    for (auto& l : layers) {
        if (auto* t = dynamic_cast<TTLinear*>(l.get()))
            print_rank_row(t->name(), t->kind(), t->inner().weight().rank_chain());
        else if (auto* r = dynamic_cast<Residual*>(l.get()))
            inspect_layers(r->stack());
    }
}

int cmd_inspect_ranks(const std::string& ckpt_path) {
    LoadedCheckpoint ck = load_checkpoint(ckpt_path);
    std::printf("%-16s %-14s %-24s %s\n", "layer", "kind", "rank chain", "");
    if (ck.model.embedding())
        print_rank_row(ck.model.embedding()->name(), "ttm_embedding",
                       ck.model.embedding()->inner().table().rank_chain());
    inspect_layers(ck.model.layers());
    return 0;
}

TensorNetworkSpec parse_network_spec(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open network spec: " + path);
    TensorNetworkSpec spec;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(f, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'name: value'");
        const std::string key = trim(line.substr(0, colon));
        const std::string value = trim(line.substr(colon + 1));
        if (key == "sizes") {
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = trim(item);
                const auto eq = item.find('=');
                if (eq == std::string::npos || eq != 1)
                    throw ConfigError("line " + std::to_string(lineno) +
                                      ": sizes entries look like 'c=4'");
                spec.sizes[item[0]] = static_cast<std::size_t>(std::stoull(item.substr(eq + 1)));
            }
        } else if (key == "output") {
            spec.output = value;
        } else {
            spec.nodes.push_back({key, value});
        }
    }
    spec.validate();
    return spec;
}

void print_plan(const char* title, const ContractionPlan& plan) {
    std::printf("%s\n", title);
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        const auto& st = plan.steps[i];
        std::printf("  step %zu: %s x %s -> %s [%s]  cost %llu\n", i + 1, st.left.c_str(),
                    st.right.c_str(), st.result.c_str(), st.result_subscript.c_str(),
                    static_cast<unsigned long long>(st.cost));
    }
    std::printf("  total cost: %llu multiply-adds\n",
                static_cast<unsigned long long>(plan.total_cost));
}

int cmd_plan_path(const std::string& spec_path, long long batch_override) {
    TensorNetworkSpec spec = parse_network_spec(spec_path);
    if (batch_override >= 0) {
        // override the batch-like index: the one unique to a single node and
        // present in the output (falls back to 'b' if present)
        auto tt = detect_tt_forward(spec);
        char bc = 0;
        if (tt) {
            for (char c : spec.output) {
                std::size_t cnt = 0;
                for (const auto& nd : spec.nodes)
                    if (nd.subscript.find(c) != std::string::npos) ++cnt;
                if (cnt == 1) bc = c;
            }
        } else if (spec.sizes.count('b')) {
            bc = 'b';
        }
        if (!bc) throw ConfigError("--batch given but no batch-like index found");
        spec.sizes[bc] = static_cast<std::size_t>(batch_override);
    }
    if (spec.nodes.size() <= 8) {
        print_plan("plan (exhaustive optimum):", exhaustive_search(spec));
    } else {
        print_plan("plan (greedy heuristic):", greedy_search(spec));
    }
    if (auto tt = detect_tt_forward(spec)) {
        auto plan = empirical_tt_plan(tt->d, tt->dims, tt->ranks, tt->batch,
                                      TTPlanMode::forward);
        print_plan("empirical TT forward plan:", plan);
    }
    return 0;
}

int cmd_bench(const std::string& config_path) {
    RunConfig cfg = RunConfig::from_file(config_path);
    Model model = build_model(cfg);
    TaskData data = build_task(cfg);

    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < std::min(cfg.batch_size, data.train.size()); ++i)
        idx.push_back(i);
    Batch batch = data.train.gather(idx);
    const std::size_t b = batch.size();

    std::printf("batch size: %zu\n", b);
    std::printf("%-16s %-14s %16s %16s %16s\n", "layer", "kind", "fwd madds", "bwd madds",
                "dense fwd");

    std::uint64_t total_fwd = 0, total_bwd = 0, total_dense_fwd = 0;

    DenseTensor h;
    if (model.embedding()) {
        reset_flop_counter();
        h = model.embedding()->forward(batch.ids, true);
        const std::uint64_t fwd = flop_counter();
        reset_flop_counter();
        model.embedding()->backward(DenseTensor(h.shape()));
        const std::uint64_t bwd = flop_counter();
        total_fwd += fwd;
        total_bwd += bwd;
        std::printf("%-16s %-14s %16llu %16llu %16llu\n",
                    model.embedding()->name().c_str(), "ttm_embedding",
                    static_cast<unsigned long long>(fwd), static_cast<unsigned long long>(bwd),
                    0ULL);  // dense lookup is a gather
    } else {
        h = batch.x;
    }
    for (auto& l : model.layers()) {
        reset_flop_counter();
        DenseTensor out = l->forward(h, true);
        const std::uint64_t fwd = flop_counter();
        reset_flop_counter();
        l->backward(DenseTensor(out.shape()));
        const std::uint64_t bwd = flop_counter();
        std::uint64_t dense_fwd = 0;
        if (auto* t = dynamic_cast<TTLinear*>(l.get()))
            dense_fwd = t->inner().dense_flop_estimate(b);
        else if (dynamic_cast<DenseLinear*>(l.get()))
            dense_fwd = static_cast<std::uint64_t>(b) * h.dim(1) * out.dim(1);
        total_fwd += fwd;
        total_bwd += bwd;
        total_dense_fwd += dense_fwd;
        std::printf("%-16s %-14s %16llu %16llu %16llu\n", l->name().c_str(), l->kind(),
                    static_cast<unsigned long long>(fwd), static_cast<unsigned long long>(bwd),
                    static_cast<unsigned long long>(dense_fwd));
        h = std::move(out);
    }
    std::printf("%-16s %-14s %16llu %16llu %16llu\n", "TOTAL", "",
                static_cast<unsigned long long>(total_fwd),
                static_cast<unsigned long long>(total_bwd),
                static_cast<unsigned long long>(total_dense_fwd));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tensor-train compressed training toolkit"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, spec_path, out_dir;
    long long seed_override = -1, batch_override = -1;

    auto* train = app.add_subcommand("train", "run a training configuration");
    train->add_option("--config", config_path, "run configuration file")->required();
    train->add_option("--out", out_dir, "output directory override");
    train->add_option("--seed", seed_override, "seed override");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its task");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();

    auto* inspect = app.add_subcommand("inspect-ranks", "per-layer rank table");
    inspect->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();

    auto* plan = app.add_subcommand("plan-path", "contraction plan for a network spec");
    plan->add_option("--spec", spec_path, "network spec file")->required();
    plan->add_option("--batch", batch_override, "override the batch index size");

    auto* bench = app.add_subcommand("bench", "multiply-add counts, compressed vs dense");
    bench->add_option("--config", config_path, "run configuration file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir, seed_override);
        if (eval->parsed()) return cmd_eval(ckpt_path);
        if (inspect->parsed()) return cmd_inspect_ranks(ckpt_path);
        if (plan->parsed()) return cmd_plan_path(spec_path, batch_override);
        if (bench->parsed()) return cmd_bench(config_path);
    } catch (const tnt::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const tnt::DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
