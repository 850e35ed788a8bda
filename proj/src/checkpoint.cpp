#include "clmpt/checkpoint.hpp"

#include <fstream>

#include "clmpt/error.hpp"

namespace clmpt {

using json = nlohmann::json;

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const nlohmann::json& metadata) {
    json j;
    j["format"] = "clmpt-checkpoint";
    j["version"] = 1;
    j["metadata"] = metadata;
    j["step"] = store.step_count();
    json tensors = json::object();
    for (const std::string& name : store.names()) {
        const Tensor& t = store.get(name);
        tensors[name] = {{"shape", t.shape()}, {"values", t.values()}};
    }
    j["tensors"] = std::move(tensors);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::io("cannot write checkpoint: " + path);
    out << j.dump() << '\n';
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error::io("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error::parse("bad checkpoint JSON in " + path + ": " + e.what());
    }
    if (j.value("format", "") != "clmpt-checkpoint")
        throw Error::parse("not a clmpt checkpoint: " + path);

    LoadedCheckpoint out;
    out.metadata = j.value("metadata", json::object());
    // Keys come back sorted; parameter updates are independent per tensor,
    // so registration order does not affect numerics.
    for (const auto& [name, jt] : j.at("tensors").items()) {
        Tensor t(jt.at("shape").get<std::vector<int64_t>>(),
                 jt.at("values").get<std::vector<double>>());
        out.store.add(name, std::move(t));
    }
    out.store.set_step_count(j.value("step", 0));
    return out;
}

} // namespace clmpt
