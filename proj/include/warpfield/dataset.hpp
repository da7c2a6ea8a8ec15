#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camera.hpp"
#include "core/common.hpp"
#include "image.hpp"
#include "synthetic.hpp"

namespace warpfield {

// Frames 12..15 of every block of 16 are held out for testing, so any clip
// shorter than 13 frames trains on everything.
inline bool is_test_index(int i) { return (i % 16) >= 12; }

struct DatasetRecord {
    Image image;
    Camera camera;
    int time_id = 0;
    bool is_test = false;
};

struct Dataset {
    std::vector<DatasetRecord> records; // the monocular clip, time-ordered
    std::vector<DatasetRecord> novel;   // held-out viewpoints with ground truth
    std::vector<Image> background;      // per-frame foreground-free renders
    std::vector<Image> masks;           // per-frame 0/1 foreground masks

    int train_count() const {
        int n = 0;
        for (const auto& r : records) n += r.is_test ? 0 : 1;
        return n;
    }
    int test_count() const { return int(records.size()) - train_count(); }
};

namespace detail {

inline std::string frame_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d.png", i);
    return buf;
}

inline nlohmann::json camera_to_json(const Camera& cam, int time_id) {
    nlohmann::json j;
    std::vector<double> r(9), k(9), t(3);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            r[std::size_t(a * 3 + b)] = cam.rotation.at(a, b);
            k[std::size_t(a * 3 + b)] = cam.intrinsics.at(a, b);
        }
    for (int a = 0; a < 3; ++a) t[std::size_t(a)] = cam.translation.at(0, a);
    j["rotation"] = r;
    j["translation"] = t;
    j["intrinsics"] = k;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["near"] = cam.near;
    j["far"] = cam.far;
    j["time_id"] = time_id;
    return j;
}

inline Camera camera_from_json(const nlohmann::json& j, int* time_id) {
    Camera cam;
    auto r = j.at("rotation").get<std::vector<double>>();
    auto k = j.at("intrinsics").get<std::vector<double>>();
    auto t = j.at("translation").get<std::vector<double>>();
    if (r.size() != 9 || k.size() != 9 || t.size() != 3)
        throw DataError("dataset: malformed camera entry");
    cam.rotation = Tensor(3, 3);
    cam.intrinsics = Tensor(3, 3);
    cam.translation = Tensor(1, 3);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            cam.rotation.at(a, b) = r[std::size_t(a * 3 + b)];
            cam.intrinsics.at(a, b) = k[std::size_t(a * 3 + b)];
        }
    for (int a = 0; a < 3; ++a) cam.translation.at(0, a) = t[std::size_t(a)];
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.near = j.at("near").get<double>();
    cam.far = j.at("far").get<double>();
    if (time_id) *time_id = j.at("time_id").get<int>();
    cam.validate();
    return cam;
}

inline void write_frames(const std::filesystem::path& dir,
                         const std::vector<DatasetRecord>& recs) {
    std::filesystem::create_directories(dir / "images");
    nlohmann::json frames = nlohmann::json::array();
    for (std::size_t i = 0; i < recs.size(); ++i) {
        write_png((dir / "images" / frame_name(int(i))).string(), recs[i].image);
        frames.push_back(camera_to_json(recs[i].camera, recs[i].time_id));
    }
    std::ofstream out(dir / "cameras.json");
    out << nlohmann::json{{"frames", frames}}.dump(2) << "\n";
}

inline std::vector<DatasetRecord> load_frames(const std::filesystem::path& dir) {
    std::ifstream in(dir / "cameras.json");
    if (!in) throw DataError("dataset: missing " + (dir / "cameras.json").string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset: bad cameras.json: ") + e.what());
    }
    std::vector<DatasetRecord> recs;
    for (const auto& f : j.at("frames")) {
        DatasetRecord r;
        r.camera = camera_from_json(f, &r.time_id);
        r.image = read_png((dir / "images" / frame_name(int(recs.size()))).string());
        if (r.image.width != r.camera.width || r.image.height != r.camera.height)
            throw DataError("dataset: image size disagrees with camera");
        recs.push_back(std::move(r));
    }
    return recs;
}

inline void write_image_dir(const std::filesystem::path& dir, const std::vector<Image>& imgs) {
    if (imgs.empty()) return;
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < imgs.size(); ++i)
        write_png((dir / frame_name(int(i))).string(), imgs[i]);
}

inline std::vector<Image> load_image_dir(const std::filesystem::path& dir, std::size_t count) {
    std::vector<Image> imgs;
    if (!std::filesystem::exists(dir)) return imgs;
    for (std::size_t i = 0; i < count; ++i)
        imgs.push_back(read_png((dir / frame_name(int(i))).string()));
    return imgs;
}

} // namespace detail

inline void write_dataset(const Dataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    if (ds.records.empty()) throw UsageError("write_dataset: no frames");
    fs::path root(dir);
    detail::write_frames(root, ds.records);

    nlohmann::json split;
    split["test"] = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        if (ds.records[i].is_test) split["test"].push_back(int(i));
    std::ofstream out(root / "split.json");
    out << split.dump(2) << "\n";

    if (!ds.novel.empty()) detail::write_frames(root / "novel", ds.novel);
    detail::write_image_dir(root / "background", ds.background);
    detail::write_image_dir(root / "masks", ds.masks);
}

inline Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path root(dir);
    if (!fs::exists(root)) throw DataError("dataset: no such directory: " + dir);
    Dataset ds;
    ds.records = detail::load_frames(root);

    std::ifstream in(root / "split.json");
    if (!in) throw DataError("dataset: missing " + (root / "split.json").string());
    nlohmann::json split;
    try {
        in >> split;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset: bad split.json: ") + e.what());
    }
    for (const auto& idx : split.at("test")) {
        int i = idx.get<int>();
        if (i < 0 || i >= int(ds.records.size()))
            throw DataError("dataset: split index out of range");
        ds.records[std::size_t(i)].is_test = true;
    }

    if (fs::exists(root / "novel")) ds.novel = detail::load_frames(root / "novel");
    ds.background = detail::load_image_dir(root / "background", ds.records.size());
    ds.masks = detail::load_image_dir(root / "masks", ds.records.size());
    return ds;
}

inline Dataset scene_to_dataset(const SyntheticScene& scene) {
    Dataset ds;
    for (std::size_t i = 0; i < scene.frames.size(); ++i) {
        DatasetRecord r;
        r.image = scene.frames[i].image;
        r.camera = scene.frames[i].camera;
        r.time_id = scene.frames[i].time_id;
        r.is_test = is_test_index(int(i));
        ds.records.push_back(std::move(r));
    }
    for (const auto& n : scene.novel) ds.novel.push_back({n.image, n.camera, n.time_id, false});
    ds.background = scene.background_only;
    ds.masks = scene.foreground_mask;
    return ds;
}

} // namespace warpfield
