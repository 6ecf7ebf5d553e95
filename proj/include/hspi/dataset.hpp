#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hspi/image_io.hpp"
#include "hspi/synth.hpp"

namespace hspi {

// On-disk dataset layout: a directory holding manifest.json plus one RGB
// image PNG and one 0/255 grayscale mask PNG per sample.

struct ManifestEntry {
    std::string image;  // file name relative to the dataset directory
    std::string mask;
    Label label = Label::normal;
    std::uint64_t seed = 0;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
};

inline std::string sample_stem(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d", index);
    return buf;
}

inline void write_dataset(const std::string& dir, const std::vector<Sample>& samples) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["samples"] = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        std::string stem = sample_stem(int(i));
        std::string img = "img_" + stem + ".png";
        std::string msk = "msk_" + stem + ".png";
        write_png_rgb((fs::path(dir) / img).string(), s.image);
        write_png_gray((fs::path(dir) / msk).string(), s.gt_mask);
        manifest["samples"].push_back({{"image", img},
                                       {"mask", msk},
                                       {"label", to_string(s.label)},
                                       {"seed", s.seed}});
    }
    std::ofstream os(fs::path(dir) / "manifest.json");
    os << manifest.dump(2) << "\n";
    if (!os) throw IoError("failed to write manifest in " + dir);
}

inline Manifest read_manifest(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path p = fs::path(dir) / "manifest.json";
    std::ifstream is(p);
    if (!is) throw IoError("no manifest.json in " + dir);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad manifest in " + dir + ": " + e.what());
    }
    Manifest m;
    for (const auto& e : j.at("samples")) {
        ManifestEntry me;
        me.image = e.at("image").get<std::string>();
        me.mask = e.at("mask").get<std::string>();
        me.label = label_from_string(e.at("label").get<std::string>());
        me.seed = e.value("seed", std::uint64_t(0));
        m.entries.push_back(std::move(me));
    }
    return m;
}

inline std::vector<Sample> load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    Manifest m = read_manifest(dir);
    std::vector<Sample> out;
    out.reserve(m.entries.size());
    for (const ManifestEntry& e : m.entries) {
        Sample s;
        s.image = read_png_rgb((fs::path(dir) / e.image).string());
        s.gt_mask = read_png_binary((fs::path(dir) / e.mask).string());
        s.label = e.label;
        s.seed = e.seed;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace hspi
