// Whole-network contracts: the frozen parameter budget, the clip-in/clip-out
// shape grid, persistence round-trips, and cross-clip-length checkpoint
// compatibility rules.
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "pnx/model.hpp"
#include "test_util.hpp"

using namespace pnx;
using namespace pnx::model;

namespace {

ModelConfig tiny_config(uint64_t seed = 0) {
    ModelConfig c;
    c.frames = 5;
    c.input_size = 32;
    c.encoder_channels = {8, 16, 32};
    c.encoder_depths = {1, 1, 1};
    c.attn_heads = 4;
    c.seed = seed;
    return c;
}

Tensor random_clip(int64_t B, int64_t F, int64_t S, uint64_t seed) {
    RandomStream rs(seed);
    Tensor x({B, F, 3, S, S});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = rs.uniform();
    return x;
}

}  // namespace

TEST(ModelConfig, ValidateAndJsonRoundTrip) {
    ModelConfig c = tiny_config(7);
    c.fusion_variant = fusion::Kind::mha;
    ModelConfig d = model_config_from_json(to_json(c));
    EXPECT_EQ(d.frames, c.frames);
    EXPECT_EQ(d.input_size, c.input_size);
    EXPECT_EQ(d.fusion_variant, c.fusion_variant);
    EXPECT_EQ(d.encoder_channels, c.encoder_channels);
    EXPECT_EQ(d.encoder_depths, c.encoder_depths);
    EXPECT_EQ(d.seed, c.seed);

    ModelConfig bad = tiny_config();
    bad.frames = 0;
    EXPECT_THROW(bad.validate(), UsageError);
    bad = tiny_config();
    bad.input_size = 100;
    EXPECT_THROW(bad.validate(), UsageError);
    bad = tiny_config();
    bad.convlstm_kernel = 2;
    EXPECT_THROW(bad.validate(), UsageError);
}

TEST(Model, ParameterBudget) {
    VideoSegmenter m(ModelConfig{});  // full-scale defaults
    const ParamCounts c = m.count_parameters();
    EXPECT_EQ(c.encoder, 12348000);
    EXPECT_EQ(c.fusion, 7964160);
    EXPECT_EQ(c.decoder, 1679713);
    EXPECT_EQ(c.total, 21991873);
    EXPECT_EQ(c.total, c.encoder + c.fusion + c.decoder);
    // the documented reference budgets, within two percent
    EXPECT_NEAR(static_cast<double>(c.encoder), 12.35e6, 0.02 * 12.35e6);
    EXPECT_NEAR(static_cast<double>(c.total), 21.95e6, 0.02 * 21.95e6);
}

TEST(Model, ShapeContractAcrossBatchAndClipLength) {
    VideoSegmenter m(tiny_config(1));
    for (int64_t B : {1, 2, 8}) {
        for (int64_t F = 1; F <= 10; ++F) {
            Tensor x = Tensor::zeros({B, F, 3, 32, 32});
            Tensor y = m.forward(x);
            ASSERT_EQ(y.dim(0), B);
            ASSERT_EQ(y.dim(1), F);
            ASSERT_EQ(y.dim(2), 1);
            ASSERT_EQ(y.dim(3), 32);
            ASSERT_EQ(y.dim(4), 32);
            ASSERT_EQ(m.last_flat_batch(), B * F);
        }
    }
    // the documented spot check: 8 clips x 5 frames flatten to one batch of 40
    m.forward(Tensor::zeros({8, 5, 3, 32, 32}));
    EXPECT_EQ(m.last_flat_batch(), 40);
}

TEST(Model, RejectsWrongGeometry) {
    VideoSegmenter m(tiny_config(2));
    EXPECT_THROW(m.forward(Tensor::zeros({1, 2, 3, 64, 64})), UsageError);
    EXPECT_THROW(m.forward(Tensor::zeros({1, 2, 1, 32, 32})), InvariantError);
    EXPECT_THROW(m.forward(Tensor::zeros({2, 3, 32, 32})), InvariantError);
}

TEST(Model, InitIsSeedDeterministic) {
    VideoSegmenter a(tiny_config(5)), b(tiny_config(5)), c(tiny_config(6));
    auto &pa = a.parameters(), &pb = b.parameters(), &pc = c.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    bool all_eq = true, any_diff_seed = false;
    for (size_t i = 0; i < pa.size(); ++i) {
        if (!bitwise_equal(pa[i]->value, pb[i]->value)) all_eq = false;
        if (!bitwise_equal(pa[i]->value, pc[i]->value)) any_diff_seed = true;
    }
    EXPECT_TRUE(all_eq);
    EXPECT_TRUE(any_diff_seed);
}

TEST(Model, ForwardIsDeterministicAndFinite) {
    VideoSegmenter a(tiny_config(5)), b(tiny_config(5));
    Tensor x = random_clip(2, 3, 32, 11);
    Tensor ya = a.forward(x), yb = b.forward(x);
    EXPECT_TRUE(bitwise_equal(ya, yb));
    EXPECT_TRUE(ya.all_finite());
}

TEST(Checkpoint, SaveLoadRoundTrip) {
    testutil::TempDir td("ckpt");
    const std::string path = td.path() + "/m.ckpt";
    VideoSegmenter m(tiny_config(9));
    Tensor x = random_clip(1, 3, 32, 13);
    Tensor y0 = m.forward(x);
    save_checkpoint(m, path, {.epoch = 7, .fold = 2});

    auto loaded = load_checkpoint(path);
    EXPECT_TRUE(bitwise_equal(loaded->forward(x), y0));
    LoadedCheckpoint raw = read_checkpoint(path);
    EXPECT_EQ(raw.meta.at("epoch").get<int64_t>(), 7);
    EXPECT_EQ(raw.meta.at("fold").get<int64_t>(), 2);
    EXPECT_EQ(raw.meta.at("config").at("input_size").get<int64_t>(), 32);
}

TEST(Checkpoint, DetectsTruncationAndCorruption) {
    testutil::TempDir td("ckptbad");
    const std::string path = td.path() + "/m.ckpt";
    VideoSegmenter m(tiny_config(10));
    save_checkpoint(m, path);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    in.close();

    const std::string trunc = td.path() + "/t.ckpt";
    std::ofstream(trunc, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    EXPECT_THROW(read_checkpoint(trunc), DataError);

    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;  // damage the payload, keep the length
    const std::string corrupt = td.path() + "/c.ckpt";
    std::ofstream(corrupt, std::ios::binary) << flipped;
    EXPECT_THROW(read_checkpoint(corrupt), DataError);

    const std::string notckpt = td.path() + "/n.ckpt";
    std::ofstream(notckpt, std::ios::binary) << "definitely not a checkpoint";
    EXPECT_THROW(read_checkpoint(notckpt), DataError);
    EXPECT_THROW(read_checkpoint(td.path() + "/absent.ckpt"), DataError);
}

TEST(Checkpoint, LoadsAcrossClipLengthsForFrameFreeVariants) {
    testutil::TempDir td("ckptF");
    const std::string path = td.path() + "/f3.ckpt";
    ModelConfig c3 = tiny_config(11);
    c3.frames = 3;
    VideoSegmenter m3(c3);
    save_checkpoint(m3, path);

    ModelConfig c8 = tiny_config(12);
    c8.frames = 8;
    VideoSegmenter m8(c8);
    EXPECT_EQ(m3.manifest_hash(), m8.manifest_hash());
    load_parameters(m8, read_checkpoint(path));  // must not throw
    Tensor x = random_clip(1, 2, 32, 17);
    EXPECT_TRUE(bitwise_equal(m8.forward(x), m3.forward(x)));
}

TEST(Checkpoint, RefusesAcrossClipLengthsForFrameBoundVariants) {
    testutil::TempDir td("ckptCS");
    const std::string path = td.path() + "/cs3.ckpt";
    ModelConfig c3 = tiny_config(13);
    c3.frames = 3;
    c3.fusion_variant = fusion::Kind::channel_stack;
    VideoSegmenter m3(c3);
    save_checkpoint(m3, path);

    ModelConfig c5 = c3;
    c5.frames = 5;
    VideoSegmenter m5(c5);
    EXPECT_NE(m3.manifest_hash(), m5.manifest_hash());
    try {
        load_parameters(m5, read_checkpoint(path));
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("fusion.stack"), std::string::npos)
            << e.what();
    }
}

TEST(Checkpoint, RefusesMismatchedWidths) {
    testutil::TempDir td("ckptW");
    const std::string path = td.path() + "/a.ckpt";
    VideoSegmenter a(tiny_config(14));
    save_checkpoint(a, path);
    ModelConfig wide = tiny_config(15);
    wide.encoder_channels = {12, 24, 48};
    VideoSegmenter b(wide);
    EXPECT_THROW(load_parameters(b, read_checkpoint(path)), DataError);
}

TEST(Checkpoint, EncoderWeightImport) {
    testutil::TempDir td("ckptE");
    const std::string donor_path = td.path() + "/donor.ckpt";
    VideoSegmenter donor(tiny_config(16));
    save_checkpoint(donor, donor_path);

    VideoSegmenter target(tiny_config(99));  // different init
    // remember one fusion parameter to prove it is untouched
    Tensor fusion_before = target.parameters().back()->value;
    load_encoder_weights(target, donor_path);

    LoadedCheckpoint raw = read_checkpoint(donor_path);
    int encoder_params = 0;
    for (nn::Parameter* p : target.parameters()) {
        if (p->name.rfind("encoder.", 0) == 0) {
            ASSERT_TRUE(bitwise_equal(p->value, raw.arrays.at(p->name))) << p->name;
            ++encoder_params;
        }
    }
    EXPECT_GT(encoder_params, 10);
    EXPECT_TRUE(bitwise_equal(target.parameters().back()->value, fusion_before));

    // width mismatch in the donor refuses cleanly
    ModelConfig wide = tiny_config(17);
    wide.encoder_channels = {12, 24, 48};
    VideoSegmenter w(wide);
    EXPECT_THROW(load_encoder_weights(w, donor_path), DataError);
}

TEST(Model, ManifestHashTracksArchitectureNotSeed) {
    EXPECT_EQ(VideoSegmenter(tiny_config(1)).manifest_hash(),
              VideoSegmenter(tiny_config(2)).manifest_hash());
    ModelConfig deeper = tiny_config(1);
    deeper.encoder_depths = {1, 1, 2};
    EXPECT_NE(VideoSegmenter(tiny_config(1)).manifest_hash(),
              VideoSegmenter(deeper).manifest_hash());
}

TEST(Model, ZeroGradClearsAccumulators) {
    VideoSegmenter m(tiny_config(18));
    Tensor x = random_clip(1, 2, 32, 19);
    Tensor y = m.forward(x, /*training=*/true);
    Tensor g(y.shape());
    g.fill(0.25);
    m.backward(g);
    double before = 0;
    for (nn::Parameter* p : m.parameters())
        if (p->grad.numel() > 0) before += p->grad.abs_max();
    EXPECT_GT(before, 0.0);
    m.zero_grad();
    for (nn::Parameter* p : m.parameters())
        if (p->grad.numel() > 0) ASSERT_EQ(p->grad.abs_max(), 0.0) << p->name;
}
