// Command-line entry point: reproducible pipelines over the query engine.
// Config precedence: flags > --config file > built-in defaults; the
// resolved config is echoed into every run directory.

#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "clmpt/error.hpp"
#include "clmpt/pipelines.hpp"

namespace {

using clmpt::pipelines::json;

int exit_code_for(clmpt::ErrorKind kind) {
    switch (kind) {
        case clmpt::ErrorKind::Config: return 2;
        case clmpt::ErrorKind::Parse: return 3;
        case clmpt::ErrorKind::Validation: return 4;
        case clmpt::ErrorKind::Index: return 5;
        case clmpt::ErrorKind::Shape: return 6;
        case clmpt::ErrorKind::Contract: return 7;
        case clmpt::ErrorKind::Sampling: return 8;
        case clmpt::ErrorKind::Training: return 9;
        case clmpt::ErrorKind::Io: return 10;
    }
    return 1;
}

// Collects only the flags the user actually passed, so file-config values
// survive unless explicitly overridden.
struct Subcommand {
    CLI::App* cmd = nullptr;
    json overrides = json::object();
    std::string config_path;

    Subcommand(CLI::App& app, const std::string& name, const std::string& desc) {
        cmd = app.add_subcommand(name, desc);
        cmd->add_option("--config", config_path, "JSON config file");
    }

    void flag_string(const std::string& flag, const std::string& key, const std::string& desc) {
        cmd->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { overrides[key] = v; }, desc);
    }
    void flag_int(const std::string& flag, const std::string& key, const std::string& desc) {
        cmd->add_option_function<int64_t>(
            flag, [this, key](int64_t v) { overrides[key] = v; }, desc);
    }
    void flag_double(const std::string& flag, const std::string& key, const std::string& desc) {
        cmd->add_option_function<double>(
            flag, [this, key](double v) { overrides[key] = v; }, desc);
    }
    void flag_bool(const std::string& flag, const std::string& key, const std::string& desc) {
        cmd->add_option_function<bool>(
            flag, [this, key](bool v) { overrides[key] = v; }, desc);
    }
    void flag_doubles(const std::string& flag, const std::string& key, const std::string& desc) {
        cmd->add_option_function<std::vector<double>>(
            flag, [this, key](const std::vector<double>& v) { overrides[key] = v; }, desc);
    }
    void flag_strings(const std::string& flag, const std::string& key, const std::string& desc) {
        cmd->add_option_function<std::vector<std::string>>(
            flag, [this, key](const std::vector<std::string>& v) { overrides[key] = v; }, desc);
    }

    json resolve(const json& defaults) const {
        json file_cfg = json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw clmpt::Error::io("cannot open config file " + config_path);
            try {
                in >> file_cfg;
            } catch (const json::exception& e) {
                throw clmpt::Error::parse("bad config JSON: " + std::string(e.what()));
            }
        }
        return clmpt::pipelines::resolve_config(defaults, file_cfg, overrides);
    }
};

void add_common(Subcommand& sc) {
    sc.flag_string("--out", "out", "run directory for outputs and the resolved config");
    sc.flag_int("--seed", "seed", "RNG seed");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"EFO-1 query answering over incomplete knowledge graphs"};
    app.require_subcommand(1);

    Subcommand ingest(app, "ingest", "split a triple TSV into train/valid/test");
    add_common(ingest);
    ingest.flag_string("--triples", "triples", "input TSV (head<TAB>relation<TAB>tail)");
    ingest.flag_doubles("--ratios", "ratios", "train,valid,test fractions");

    Subcommand gen(app, "gen-queries", "sample query instances with easy/hard answers");
    add_common(gen);
    gen.flag_string("--data", "data", "data directory from ingest");
    gen.flag_string("--split", "split", "train, valid or test");
    gen.flag_strings("--shapes", "shapes", "query shapes (default: split-appropriate set)");
    gen.flag_int("--count", "count", "instances per shape");
    gen.flag_int("--retry-budget", "retry_budget", "resampling budget per instance");

    Subcommand pre(app, "pretrain", "pretrain the link predictor on one-hop triples");
    add_common(pre);
    pre.flag_string("--data", "data", "data directory from ingest");
    pre.flag_int("--rank", "rank", "complex embedding dimension");
    pre.flag_int("--epochs", "epochs", "training epochs");
    pre.flag_double("--lr", "lr", "learning rate");
    pre.flag_int("--batch", "batch", "batch size");
    pre.flag_double("--reg-weight", "reg_weight", "nuclear 3-norm weight");
    pre.flag_double("--weight-decay", "weight_decay", "AdamW weight decay");

    Subcommand tr(app, "train", "train the message-passing model on query instances");
    add_common(tr);
    tr.flag_string("--data", "data", "data directory from ingest");
    tr.flag_string("--queries", "queries", "training instances JSONL");
    tr.flag_string("--predictor", "predictor", "pretrained predictor checkpoint");
    tr.flag_int("--steps", "steps", "training steps");
    tr.flag_int("--batch", "batch", "queries per step");
    tr.flag_double("--lr", "lr", "learning rate");
    tr.flag_double("--weight-decay", "weight_decay", "AdamW weight decay");
    tr.flag_string("--pooling", "pooling", "mean, sum or max");
    tr.flag_bool("--predictor-trainable", "predictor_trainable",
                 "keep optimizing the predictor tables");
    tr.flag_bool("--conditional-passing", "conditional_passing",
                 "skip messages into constant nodes");
    tr.flag_double("--temperature", "temperature", "NCE temperature");
    tr.flag_int("--negatives", "negatives", "noise samples per query");
    tr.flag_int("--encoder-layers", "encoder_layers", "transformer blocks");
    tr.flag_int("--encoder-heads", "encoder_heads", "attention heads");
    tr.flag_int("--ffn-hidden", "ffn_hidden", "FFN hidden width");
    tr.flag_double("--dropout", "dropout", "encoder dropout rate");
    tr.flag_int("--log-every", "log_every", "progress print period (0 = silent)");

    Subcommand ev(app, "eval", "filtered MRR / Hits@K over hard answers");
    add_common(ev);
    ev.flag_string("--data", "data", "data directory from ingest");
    ev.flag_string("--queries", "queries", "instances JSONL");
    ev.flag_string("--model", "model", "trained model checkpoint");
    ev.flag_string("--scorer", "scorer", "model or oracle");
    ev.flag_int("--workers", "workers", "parallel scoring threads");

    Subcommand ans(app, "answer", "answer one DSL query with a trained model");
    add_common(ans);
    ans.flag_string("--data", "data", "data directory from ingest");
    ans.flag_string("--model", "model", "trained model checkpoint");
    ans.flag_string("--query", "query", "query text, e.g. 'r(a, y)'");
    ans.flag_int("--topk", "topk", "rows to print");

    Subcommand bench(app, "bench-conditional", "cost comparison of conditional passing");
    add_common(bench);
    bench.flag_string("--data", "data", "data directory from ingest");
    bench.flag_int("--rank", "rank", "embedding dimension for the benchmark model");
    bench.flag_int("--steps", "steps", "training steps per measured run");
    bench.flag_int("--batch", "batch", "queries per step");
    bench.flag_int("--repetitions", "repetitions", "measured repetitions per mode");
    bench.flag_int("--count-per-shape", "count_per_shape", "instances per shape");
    bench.flag_strings("--shapes", "shapes", "workload query shapes");
    bench.flag_int("--negatives", "negatives", "noise samples per query");
    bench.flag_int("--encoder-layers", "encoder_layers", "transformer blocks");
    bench.flag_int("--encoder-heads", "encoder_heads", "attention heads");
    bench.flag_int("--ffn-hidden", "ffn_hidden", "FFN hidden width");

    Subcommand self(app, "selftest", "run the built-in invariant suites");
    add_common(self);

    CLI11_PARSE(app, argc, argv);

    try {
        namespace pl = clmpt::pipelines;
        if (ingest.cmd->parsed()) {
            std::cout << pl::run_ingest(ingest.resolve(pl::ingest_defaults())).dump(2) << "\n";
        } else if (gen.cmd->parsed()) {
            std::cout << pl::run_gen_queries(gen.resolve(pl::gen_queries_defaults())).dump(2)
                      << "\n";
        } else if (pre.cmd->parsed()) {
            std::cout << pl::run_pretrain(pre.resolve(pl::pretrain_defaults())).dump(2) << "\n";
        } else if (tr.cmd->parsed()) {
            std::cout << pl::run_train(tr.resolve(pl::train_defaults())).dump(2) << "\n";
        } else if (ev.cmd->parsed()) {
            const json cfg = ev.resolve(pl::eval_defaults());
            std::cout << pl::run_eval(cfg).dump(2) << "\n";
            std::ifstream table(cfg.at("out").get<std::string>() + "/report.txt");
            std::cout << table.rdbuf();
        } else if (ans.cmd->parsed()) {
            const json result = pl::run_answer(ans.resolve(pl::answer_defaults()));
            for (const auto& row : result.at("top"))
                std::cout << row.at("rank").get<int>() << "\t"
                          << row.at("entity").get<std::string>() << "\t"
                          << row.at("score").get<double>() << "\n";
        } else if (bench.cmd->parsed()) {
            std::cout << pl::run_bench(bench.resolve(pl::bench_defaults())).dump(2) << "\n";
        } else if (self.cmd->parsed()) {
            if (!pl::run_selftest(self.resolve(pl::selftest_defaults()), std::cout)) return 1;
        }
    } catch (const clmpt::Error& e) {
        std::cerr << "error [" << clmpt::error_kind_name(e.kind()) << "]: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
