#pragma once
// Reproducible end-to-end pipelines behind the CLI subcommands and the
// python bindings. Every pipeline takes a resolved JSON config, writes its
// outputs plus the config echo into the `out` run directory, and returns a
// machine-readable summary.

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "clmpt/kg.hpp"

namespace clmpt::pipelines {

using nlohmann::json;

// Dataset directory produced by `ingest`.
struct DataBundle {
    Vocabulary entities;
    Vocabulary relations;
    KnowledgeGraph train;
    KnowledgeGraph valid;
    KnowledgeGraph test;
};

DataBundle load_data_dir(const std::string& dir);

json ingest_defaults();
json gen_queries_defaults();
json pretrain_defaults();
json train_defaults();
json eval_defaults();
json answer_defaults();
json bench_defaults();
json selftest_defaults();

json run_ingest(const json& cfg);
json run_gen_queries(const json& cfg);
json run_pretrain(const json& cfg);
json run_train(const json& cfg);
json run_eval(const json& cfg);
json run_answer(const json& cfg);
json run_bench(const json& cfg);
// Prints one pass/fail line per invariant suite; true when all pass.
bool run_selftest(const json& cfg, std::ostream& out);

// defaults <- file config <- explicit flag overrides; rejects unknown keys.
json resolve_config(json defaults, const json& file_config, const json& flag_overrides);

} // namespace clmpt::pipelines
