#include "scp/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "scp/error.hpp"

namespace scp::nn {
namespace {

constexpr char kMagic[8] = {'S', 'C', 'P', 'C', 'K', 'P', 'T', '1'};
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Entry {
    std::string name;
    std::vector<float>* data;
};

std::vector<Entry> entries(UNet<float>& model, const Sgd<float>* optimizer) {
    std::vector<Entry> out;
    auto params = model.parameters();
    for (auto* p : params) out.push_back({"param:" + p->name, &p->value});
    for (auto& b : model.buffers()) out.push_back({"buffer:" + b.name, b.value});
    if (optimizer) {
        auto& vel = const_cast<Sgd<float>*>(optimizer)->momentum_buffers();
        for (std::size_t k = 0; k < params.size(); ++k) out.push_back({"momentum:" + params[k]->name, &vel[k]});
    }
    return out;
}

const char* tap_name(FeatureTap tap) { return tap == FeatureTap::Final ? "final" : "penultimate"; }

}  // namespace

nlohmann::json architecture_json(const UNetConfig& config) {
    return {{"in_channels", config.in_channels},
            {"classes", config.classes},
            {"base_width", config.base_width},
            {"feature_tap", tap_name(config.tap)},
            {"init_seed", config.seed}};
}

UNetConfig architecture_from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.classes = j.at("classes").get<int>();
    c.base_width = j.at("base_width").get<int>();
    const auto tap = j.at("feature_tap").get<std::string>();
    if (tap == "final") {
        c.tap = FeatureTap::Final;
    } else if (tap == "penultimate") {
        c.tap = FeatureTap::Penultimate;
    } else {
        throw FormatError("checkpoint: unknown feature_tap '" + tap + "'");
    }
    c.seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

void save_checkpoint(const std::filesystem::path& path, UNet<float>& model, const Sgd<float>* optimizer,
                     const nlohmann::json& state) {
    auto list = entries(model, optimizer);
    nlohmann::json manifest;
    manifest["format"] = "scp-checkpoint";
    manifest["version"] = 1;
    manifest["architecture"] = architecture_json(model.config());
    manifest["parameter_count"] = model.parameter_count();
    manifest["has_optimizer"] = optimizer != nullptr;
    manifest["state"] = state;
    auto& tensors = manifest["tensors"] = nlohmann::json::array();
    for (const auto& e : list) tensors.push_back({{"name", e.name}, {"count", e.data->size()}});
    const std::string text = manifest.dump();

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write checkpoint " + tmp.string());
        out.write(kMagic, sizeof kMagic);
        const std::uint64_t len = text.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& e : list) {
            out.write(reinterpret_cast<const char*>(e.data->data()),
                      static_cast<std::streamsize>(e.data->size() * sizeof(float)));
        }
        if (!out) throw FormatError("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {

nlohmann::json read_manifest(std::ifstream& in, const std::filesystem::path& path) {
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw FormatError(path.string() + " is not a checkpoint archive");
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1u << 30)) throw FormatError(path.string() + ": corrupt manifest length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw FormatError(path.string() + ": truncated manifest");
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": manifest is not valid JSON: " + e.what());
    }
}

}  // namespace

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    return read_manifest(in, path);
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, UNet<float>& model, Sgd<float>* optimizer) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    const auto manifest = read_manifest(in, path);

    const auto arch = architecture_from_json(manifest.at("architecture"));
    const auto& have = model.config();
    if (arch.classes != have.classes || arch.base_width != have.base_width || arch.in_channels != have.in_channels ||
        arch.tap != have.tap) {
        throw FormatError(path.string() + ": architecture does not match the model");
    }
    if (optimizer && !manifest.at("has_optimizer").get<bool>()) {
        throw FormatError(path.string() + ": checkpoint holds no optimizer state");
    }

    std::map<std::string, std::vector<float>*> targets;
    for (auto& e : entries(model, optimizer)) targets[e.name] = e.data;

    std::size_t restored = 0;
    std::vector<float> skip;
    for (const auto& t : manifest.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        const auto count = t.at("count").get<std::size_t>();
        auto it = targets.find(name);
        std::vector<float>* dst = &skip;
        if (it != targets.end()) {
            if (it->second->size() != count) throw FormatError(path.string() + ": size mismatch for " + name);
            dst = it->second;
            ++restored;
        } else {
            skip.resize(count);
        }
        in.read(reinterpret_cast<char*>(dst->data()), static_cast<std::streamsize>(count * sizeof(float)));
        if (!in) throw FormatError(path.string() + ": truncated tensor data at " + name);
    }
    if (restored != targets.size()) throw FormatError(path.string() + ": checkpoint is missing tensors");
    return manifest.at("state");
}

}  // namespace scp::nn
