#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "warpfield/dataset.hpp"

using namespace warpfield;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("warpfield_dataset_") + tag);
    fs::remove_all(p);
    return p;
}

Camera test_camera() {
    Tensor pos = Tensor::from_rows(1, 3, {0, 0, -4});
    return look_at_camera(pos, Tensor(1, 3), 20.0, 16, 16, 2.0, 6.5);
}

Dataset fabricated_dataset(int frames) {
    Dataset ds;
    for (int i = 0; i < frames; ++i) {
        DatasetRecord r;
        r.image = Image(16, 16);
        for (int p = 0; p < 256; ++p)
            for (int c = 0; c < 3; ++c) r.image.pixels.at(p, c) = ((p + i * 31 + c * 97) % 256) / 255.0;
        r.camera = test_camera();
        r.time_id = i;
        r.is_test = is_test_index(i);
        ds.records.push_back(std::move(r));
    }
    return ds;
}
} // namespace

TEST(Split, HoldsOutTheTailOfEveryBlockOf16) {
    for (int i = 0; i < 12; ++i) EXPECT_FALSE(is_test_index(i));
    for (int i = 12; i < 16; ++i) EXPECT_TRUE(is_test_index(i));
    for (int i = 16; i < 28; ++i) EXPECT_FALSE(is_test_index(i));
    for (int i = 28; i < 32; ++i) EXPECT_TRUE(is_test_index(i));
}

TEST(Split, CountsMatchTheRule) {
    EXPECT_EQ(fabricated_dataset(32).train_count(), 24);
    EXPECT_EQ(fabricated_dataset(32).test_count(), 8);
    EXPECT_EQ(fabricated_dataset(16).train_count(), 12);
    EXPECT_EQ(fabricated_dataset(16).test_count(), 4);
    EXPECT_EQ(fabricated_dataset(10).train_count(), 10);
    EXPECT_EQ(fabricated_dataset(10).test_count(), 0);
}

TEST(DatasetIo, RoundTripsFramesCamerasAndSplit) {
    fs::path dir = temp_dir("roundtrip");
    Dataset ds = fabricated_dataset(17);
    write_dataset(ds, dir.string());
    Dataset back = load_dataset(dir.string());

    ASSERT_EQ(back.records.size(), 17u);
    for (std::size_t i = 0; i < back.records.size(); ++i) {
        const DatasetRecord& a = ds.records[i];
        const DatasetRecord& b = back.records[i];
        EXPECT_EQ(b.time_id, a.time_id);
        EXPECT_EQ(b.is_test, a.is_test);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                EXPECT_DOUBLE_EQ(b.camera.rotation.at(r, c), a.camera.rotation.at(r, c));
                EXPECT_DOUBLE_EQ(b.camera.intrinsics.at(r, c), a.camera.intrinsics.at(r, c));
            }
        for (int c = 0; c < 3; ++c)
            EXPECT_DOUBLE_EQ(b.camera.translation.at(0, c), a.camera.translation.at(0, c));
        EXPECT_DOUBLE_EQ(b.camera.near, a.camera.near);
        EXPECT_DOUBLE_EQ(b.camera.far, a.camera.far);
        // pixels survive up to 8-bit quantization
        for (int p = 0; p < 256; ++p)
            for (int c = 0; c < 3; ++c)
                EXPECT_DOUBLE_EQ(b.image.pixels.at(p, c),
                                 quantize_channel(a.image.pixels.at(p, c)) / 255.0);
    }
    fs::remove_all(dir);
}

TEST(DatasetIo, RoundTripsNovelViewsAndAuxiliaryImages) {
    fs::path dir = temp_dir("extras");
    Dataset ds = fabricated_dataset(4);
    ds.novel.push_back({ds.records[1].image, test_camera(), 1, false});
    for (int i = 0; i < 4; ++i) {
        Image m(16, 16);
        for (int p = 0; p < 256; ++p)
            for (int c = 0; c < 3; ++c) m.pixels.at(p, c) = (p + i) % 2 ? 1.0 : 0.0;
        ds.masks.push_back(m);
        ds.background.push_back(ds.records[std::size_t(i)].image);
    }
    write_dataset(ds, dir.string());
    Dataset back = load_dataset(dir.string());

    ASSERT_EQ(back.novel.size(), 1u);
    EXPECT_EQ(back.novel[0].time_id, 1);
    ASSERT_EQ(back.masks.size(), 4u);
    ASSERT_EQ(back.background.size(), 4u);
    for (int i = 0; i < 4; ++i)
        for (int p = 0; p < 256; ++p)
            EXPECT_DOUBLE_EQ(back.masks[std::size_t(i)].pixels.at(p, 0), (p + i) % 2 ? 1.0 : 0.0);
    fs::remove_all(dir);
}

TEST(DatasetIo, SceneConversionCarriesEverythingOver) {
    SyntheticSpec s = toy_scene();
    s.frames = 3;
    s.width = s.height = 16;
    s.focal = 20.0;
    s.oracle_samples = 32;
    s.novel_stride = 2;
    Dataset ds = scene_to_dataset(generate_synthetic(s));
    EXPECT_EQ(ds.records.size(), 3u);
    EXPECT_EQ(ds.novel.size(), 2u);
    EXPECT_EQ(ds.background.size(), 3u);
    EXPECT_EQ(ds.masks.size(), 3u);
    EXPECT_EQ(ds.train_count(), 3);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(ds.records[std::size_t(i)].time_id, i);
}

TEST(DatasetIo, MissingDirectoryThrows) {
    EXPECT_THROW(load_dataset("/nonexistent_warpfield_dataset"), DataError);
}

TEST(DatasetIo, CorruptCamerasFileThrows) {
    fs::path dir = temp_dir("corrupt");
    write_dataset(fabricated_dataset(2), dir.string());
    std::ofstream(dir / "cameras.json") << "{ not json";
    EXPECT_THROW(load_dataset(dir.string()), DataError);
    fs::remove_all(dir);
}

TEST(DatasetIo, OutOfRangeSplitIndexThrows) {
    fs::path dir = temp_dir("badsplit");
    write_dataset(fabricated_dataset(2), dir.string());
    std::ofstream(dir / "split.json") << "{\"test\": [5]}";
    EXPECT_THROW(load_dataset(dir.string()), DataError);
    fs::remove_all(dir);
}

TEST(DatasetIo, EmptyDatasetIsRejected) {
    EXPECT_THROW(write_dataset(Dataset{}, "/tmp/warpfield_empty"), UsageError);
}
