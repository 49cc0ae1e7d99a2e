/*
 * Copyright 2026 The ecunlearn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ecu/checkpoint.hpp"

#include <map>

#include <json.hpp>

#include "ecu/binary_io.hpp"
#include "ecu/error.hpp"

namespace ecu {

using nlohmann::json;

std::string encode_checkpoint(const ModelBundle& bundle) {
    json manifest;
    manifest["format"] = "ULCK";
    manifest["version"] = kCheckpointVersion;
    manifest["metadata"] = {{"seed", bundle.metadata().seed},
                            {"config_hash", bundle.metadata().config_hash},
                            {"provenance", bundle.metadata().provenance}};
    manifest["num_stages"] = bundle.num_stages();
    json modules = json::array();
    for (const auto& m : bundle.ec_modules()) {
        modules.push_back({{"stage", m.stage}, {"blocks", m.blocks.size()}, {"aux_frozen", m.aux_frozen}});
    }
    manifest["ec_modules"] = modules;

    io::Writer blob;
    json params = json::array();
    std::size_t offset = 0;
    for (const auto& p : bundle.parameters()) {
        params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}});
        for (double v : p.tensor.values()) blob.f64(v);
        offset += p.tensor.numel();
    }
    manifest["parameters"] = params;
    manifest["blob_doubles"] = offset;

    const std::string text = manifest.dump();
    io::Writer out;
    out.bytes("ULCK");
    out.uint<std::uint16_t>(kCheckpointVersion);
    out.uint<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
    out.bytes(text);
    out.bytes(blob.data());
    return out.data();
}

namespace {

Affine take_affine(std::map<std::string, Tensor>& table, const std::string& prefix) {
    auto w = table.find(prefix + ".weight");
    auto b = table.find(prefix + ".bias");
    if (w == table.end() || b == table.end()) throw FormatError("checkpoint: missing parameter '" + prefix + "'");
    Affine a{w->second, b->second};
    if (a.weight.ndim() != 2 || a.bias.ndim() != 2 || a.bias.shape()[0] != 1 || a.bias.shape()[1] != a.out_dim()) {
        throw FormatError("checkpoint: malformed shapes for '" + prefix + "'");
    }
    table.erase(w);
    table.erase(b);
    return a;
}

}  // namespace

ModelBundle decode_checkpoint(const std::string& bytes) {
    io::Reader in(bytes, "checkpoint");
    if (in.bytes(4) != "ULCK") throw FormatError("checkpoint: bad magic (expected ULCK)");
    const auto version = in.uint<std::uint16_t>();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported format version " + std::to_string(version) + " (this build reads " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const auto manifest_len = in.uint<std::uint32_t>();
    json manifest;
    try {
        manifest = json::parse(in.bytes(manifest_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: corrupt manifest: ") + e.what());
    }
    try {
        const std::size_t total = manifest.at("blob_doubles").get<std::size_t>();
        if (in.remaining() != total * 8) throw FormatError("checkpoint: blob size does not match manifest (truncated?)");
        std::vector<double> blob(total);
        for (double& v : blob) v = in.f64();

        std::map<std::string, Tensor> table;
        for (const auto& p : manifest.at("parameters")) {
            const auto shape = p.at("shape").get<Shape>();
            const std::size_t offset = p.at("offset").get<std::size_t>();
            const std::size_t n = shape_numel(shape);
            if (offset + n > total) throw FormatError("checkpoint: parameter extends past blob");
            table.emplace(p.at("name").get<std::string>(),
                          Tensor(shape, std::vector<double>(blob.begin() + offset, blob.begin() + offset + n), true));
        }

        Backbone backbone;
        const std::size_t L = manifest.at("num_stages").get<std::size_t>();
        for (std::size_t s = 1; s <= L; ++s) {
            backbone.stages.push_back(Stage{take_affine(table, "stage" + std::to_string(s)), Activation::relu});
        }
        backbone.classifier = take_affine(table, "classifier");
        std::vector<ECModule> modules;
        for (const auto& m : manifest.at("ec_modules")) {
            ECModule module;
            module.stage = m.at("stage").get<std::size_t>();
            const std::size_t blocks = m.at("blocks").get<std::size_t>();
            const std::string prefix = "ec" + std::to_string(module.stage);
            for (std::size_t b = 1; b <= blocks; ++b) {
                module.blocks.push_back(Stage{take_affine(table, prefix + ".block" + std::to_string(b)), Activation::relu});
            }
            module.aux_classifier = take_affine(table, prefix + ".aux");
            module.aux_frozen = m.at("aux_frozen").get<bool>();
            modules.push_back(std::move(module));
        }
        if (!table.empty()) throw FormatError("checkpoint: unexpected parameter '" + table.begin()->first + "'");

        BundleMetadata meta;
        const auto& md = manifest.at("metadata");
        meta.seed = md.at("seed").get<std::uint64_t>();
        meta.config_hash = md.at("config_hash").get<std::string>();
        meta.provenance = md.at("provenance").get<std::string>();
        try {
            return ModelBundle(std::move(backbone), std::move(modules), std::move(meta));
        } catch (const std::invalid_argument& e) {
            throw FormatError(std::string("checkpoint: invalid structure: ") + e.what());
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: malformed manifest: ") + e.what());
    }
}

void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
    io::write_file(path, encode_checkpoint(bundle));
}

ModelBundle load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace ecu
