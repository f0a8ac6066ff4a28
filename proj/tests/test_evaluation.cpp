#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pnx/evaluation.hpp"
#include "pnx/report.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace pnx;

namespace {

constexpr int64_t kF = 3, kS = 32;

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Echoes the ground truth for clips flagged true, empty masks otherwise;
// relies on evaluate_split visiting records in order, windows_per_clip
// windows apiece.
class SwitchPredictor : public evaluation::Predictor {
  public:
    SwitchPredictor(std::vector<bool> echo, int windows_per_clip)
        : echo_(std::move(echo)), wpc_(windows_per_clip) {}
    Tensor predict(const Tensor&, const Tensor& gt) override {
        const bool echo = echo_[static_cast<size_t>(calls_ / wpc_)];
        ++calls_;
        if (echo) return gt;
        Tensor z(gt.shape());
        z.zero();
        return z;
    }
    int calls() const { return calls_; }

  private:
    std::vector<bool> echo_;
    int wpc_;
    int calls_ = 0;
};

class CountingOracle : public evaluation::Predictor {
  public:
    Tensor predict(const Tensor&, const Tensor& gt) override {
        ++calls_;
        return gt;
    }
    int calls() const { return calls_; }

  private:
    int calls_ = 0;
};

class MisshapenPredictor : public evaluation::Predictor {
  public:
    Tensor predict(const Tensor&, const Tensor& gt) override {
        Tensor bad({1, gt.dim(1), 1, kS, kS / 2});
        bad.zero();
        return bad;
    }
};

}  // namespace

TEST(EvaluateSplit, OracleScoresPerfectOnEveryClip) {
    testutil::TempDir tmp("eval_oracle");
    auto recs = testutil::synth_records(tmp.path());
    evaluation::OraclePredictor oracle;
    auto rep = evaluation::evaluate_split(oracle, recs, kF, kS);

    ASSERT_EQ(rep.per_clip.size(), recs.size());
    for (const auto& [id, m] : rep.per_clip) {
        EXPECT_EQ(m.dice, 1.0) << id;
        EXPECT_EQ(m.iou, 1.0) << id;
        EXPECT_EQ(m.recall, 1.0) << id;
        EXPECT_EQ(m.hd95, 0.0) << id;
        EXPECT_EQ(m.frames, 6);
    }
    EXPECT_EQ(rep.aggregate.dice, 1.0);
    EXPECT_EQ(rep.aggregate.iou, 1.0);
    EXPECT_EQ(rep.aggregate.recall, 1.0);
    EXPECT_EQ(rep.aggregate.hd95, 0.0);
    EXPECT_EQ(rep.aggregate.frames, static_cast<int64_t>(6 * recs.size()));
}

TEST(EvaluateSplit, BackgroundScoresZeroWithSentinelDistance) {
    testutil::TempDir tmp("eval_bg");
    auto recs = testutil::synth_records(tmp.path());
    evaluation::BackgroundPredictor bg;
    auto rep = evaluation::evaluate_split(bg, recs, kF, kS);

    // Every synthetic frame has a positive mask, so a frame with an empty
    // prediction and non-empty truth gets the image-diagonal distance.
    const double sentinel = std::sqrt(static_cast<double>(2 * kS * kS));
    EXPECT_EQ(rep.aggregate.dice, 0.0);
    EXPECT_EQ(rep.aggregate.recall, 0.0);
    EXPECT_EQ(rep.aggregate.iou, 0.0);
    EXPECT_NEAR(rep.aggregate.hd95, sentinel, 1e-12);
}

TEST(EvaluateSplit, SkippingHd95LeavesItZero) {
    testutil::TempDir tmp("eval_nohd");
    auto recs = testutil::synth_records(tmp.path());
    evaluation::BackgroundPredictor bg;
    evaluation::EvalOptions opts;
    opts.compute_hd95 = false;
    auto rep = evaluation::evaluate_split(bg, recs, kF, kS, opts);
    EXPECT_EQ(rep.aggregate.hd95, 0.0);
}

TEST(EvaluateSplit, PaddedDuplicateFramesAreDropped) {
    testutil::TempDir tmp("eval_pad");
    // 7 frames with F=3 -> windows [0,1,2] [3,4,5] [6,6,6]: the tail window
    // repeats the last frame twice, and those duplicates must not be scored.
    auto recs = testutil::synth_records(tmp.path(), 2, /*frames=*/7);
    CountingOracle oracle;
    auto rep = evaluation::evaluate_split(oracle, recs, kF, kS);
    for (const auto& [id, m] : rep.per_clip) EXPECT_EQ(m.frames, 7) << id;
    EXPECT_EQ(oracle.calls(), static_cast<int>(3 * recs.size()));
    EXPECT_EQ(rep.aggregate.frames, static_cast<int64_t>(7 * recs.size()));
}

TEST(EvaluateSplit, ClipOrderDoesNotChangeTheReport) {
    testutil::TempDir tmp("eval_order");
    auto recs = testutil::synth_records(tmp.path());
    auto rev = recs;
    std::reverse(rev.begin(), rev.end());
    evaluation::OraclePredictor oracle;
    auto a = evaluation::evaluate_split(oracle, recs, kF, kS);
    auto b = evaluation::evaluate_split(oracle, rev, kF, kS);
    EXPECT_EQ(a, b);
}

TEST(EvaluateSplit, AttributeTableAveragesOverCarryingClips) {
    testutil::TempDir tmp("eval_attr");
    auto recs = testutil::synth_records(tmp.path());
    ASSERT_GE(recs.size(), 3u);
    recs.resize(3);
    recs[0].attributes = {"IB"};
    recs[1].attributes = {"SSL"};
    recs[2].attributes = {"IB", "SSL"};

    // 6 frames at F=3 -> two windows per clip.
    SwitchPredictor pred({true, false, true}, /*windows_per_clip=*/2);
    auto rep = evaluation::evaluate_split(pred, recs, kF, kS);
    EXPECT_EQ(pred.calls(), 6);

    ASSERT_EQ(rep.by_attribute.size(), 2u);
    EXPECT_DOUBLE_EQ(rep.by_attribute.at("IB"), 1.0);    // clips 0 and 2
    EXPECT_DOUBLE_EQ(rep.by_attribute.at("SSL"), 0.5);   // clips 1 and 2
    EXPECT_NEAR(rep.aggregate.dice, 2.0 / 3.0, 1e-12);
}

TEST(EvaluateSplit, EmptySplitThrows) {
    evaluation::OraclePredictor oracle;
    std::vector<data::ClipRecord> none;
    EXPECT_THROW(evaluation::evaluate_split(oracle, none, kF, kS), DataError);
}

TEST(EvaluateSplit, MisshapenPredictionIsRejected) {
    testutil::TempDir tmp("eval_shape");
    auto recs = testutil::synth_records(tmp.path());
    MisshapenPredictor bad;
    EXPECT_THROW(evaluation::evaluate_split(bad, recs, kF, kS), InvariantError);
}

namespace {

evaluation::MetricReport sample_report() {
    evaluation::MetricReport r;
    r.split = "easy_unseen";
    r.per_clip["c0001"] = {0.9, 0.81818181818181823, 0.95, 3.5, 6};
    r.per_clip["c0002"] = {0.7, 0.53846153846153844, 0.8, 12.25, 7};
    r.aggregate = {0.8, 0.67832167832167833, 0.875, 7.875, 13};
    r.by_attribute = {{"IB", 0.9}, {"SSL", 0.7}};
    r.params = {1000, 2000, 300, 3300};
    r.fps = 42.5;
    return r;
}

}  // namespace

TEST(Report, CsvHasConventionCommentHeaderAndAggregateRow) {
    testutil::TempDir tmp("report_csv");
    const std::string path = tmp.path() + "/m.csv";
    report::write_csv(sample_report(), path);

    std::ifstream f(path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(f, line);)
        if (!line.empty()) lines.push_back(line);
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0].rfind("# split=easy_unseen;", 0), 0u);
    EXPECT_NE(lines[0].find("hd95=4-connected"), std::string::npos);
    EXPECT_EQ(lines[1], "clip_id,frames,dice,iou,recall,hd95");
    EXPECT_EQ(lines[2].rfind("c0001,6,", 0), 0u);
    EXPECT_EQ(lines[3].rfind("c0002,7,", 0), 0u);
    EXPECT_EQ(lines[4].rfind("AGGREGATE,13,", 0), 0u);
    EXPECT_NE(lines[4].find("0.800000"), std::string::npos);
}

TEST(Report, JsonRoundTripPreservesEverything) {
    const auto r = sample_report();
    const auto back = report::report_from_json(report::to_json(r));
    EXPECT_EQ(back, r);

    testutil::TempDir tmp("report_json");
    const std::string path = tmp.path() + "/m.json";
    report::write_json(r, path);
    std::ifstream f(path);
    nlohmann::json j;
    f >> j;
    EXPECT_EQ(report::report_from_json(j), r);
    EXPECT_EQ(j.at("split"), "easy_unseen");
    EXPECT_EQ(j.at("params").at("total"), 3300);
}

TEST(Report, MarkdownListsAggregateAttributesAndClips) {
    testutil::TempDir tmp("report_md");
    const std::string path = tmp.path() + "/m.md";
    report::write_markdown(sample_report(), path);
    const std::string md = slurp(path);

    EXPECT_NE(md.find("| dice | iou | recall | hd95 | params (M) | fps |"),
              std::string::npos);
    EXPECT_NE(md.find("## Dice by visual attribute"), std::string::npos);
    EXPECT_NE(md.find(" IB |"), std::string::npos);
    EXPECT_NE(md.find(" SSL |"), std::string::npos);
    EXPECT_NE(md.find("| c0001 | 6 |"), std::string::npos);
    EXPECT_NE(md.find("| c0002 | 7 |"), std::string::npos);
    EXPECT_NE(md.find("0.8000"), std::string::npos);  // aggregate dice
    EXPECT_NE(md.find("| 42.5 |"), std::string::npos);
}

TEST(Report, MarkdownOmitsAttributeTableWhenNoneRecorded) {
    testutil::TempDir tmp("report_md2");
    auto r = sample_report();
    r.by_attribute.clear();
    r.fps = 0.0;
    const std::string path = tmp.path() + "/m.md";
    report::write_markdown(r, path);
    const std::string md = slurp(path);
    EXPECT_EQ(md.find("Dice by visual attribute"), std::string::npos);
    EXPECT_NE(md.find("| - |"), std::string::npos);  // fps placeholder
}

TEST(Report, EmitReportDispatchesOnFormat) {
    testutil::TempDir tmp("report_emit");
    const auto r = sample_report();
    report::emit_report(r, report::Format::csv, tmp.path() + "/a.csv");
    report::emit_report(r, report::Format::json, tmp.path() + "/a.json");
    report::emit_report(r, report::Format::markdown, tmp.path() + "/a.md");
    EXPECT_EQ(slurp(tmp.path() + "/a.csv").rfind("# split=", 0), 0u);
    EXPECT_EQ(slurp(tmp.path() + "/a.json").rfind("{", 0), 0u);
    EXPECT_EQ(slurp(tmp.path() + "/a.md").rfind("# Evaluation report", 0), 0u);
}

TEST(BenchmarkFps, RejectsTooFewTrialsOrWarmup) {
    model::ModelConfig mc;
    mc.frames = 2;
    mc.input_size = 32;
    mc.encoder_channels = {8, 16, 32};
    mc.encoder_depths = {1, 1, 1};
    mc.attn_heads = 4;
    model::VideoSegmenter m(mc);
    EXPECT_THROW(evaluation::benchmark_fps(m, 9, 3), UsageError);
    EXPECT_THROW(evaluation::benchmark_fps(m, 10, 2), UsageError);
}

TEST(BenchmarkFps, ReportsPositiveFiniteMedian) {
    model::ModelConfig mc;
    mc.frames = 2;
    mc.input_size = 32;
    mc.encoder_channels = {8, 16, 32};
    mc.encoder_depths = {1, 1, 1};
    mc.attn_heads = 4;
    model::VideoSegmenter m(mc);
    auto r = evaluation::benchmark_fps(m, 10, 3);
    EXPECT_TRUE(std::isfinite(r.fps_median));
    EXPECT_GT(r.fps_median, 0.0);
    EXPECT_GT(r.latency_median_s, 0.0);
    EXPECT_GE(r.latency_mean_s, 0.0);
    EXPECT_GE(r.fps_iqr, 0.0);
    EXPECT_EQ(r.trials, 10);
    EXPECT_EQ(r.frames_per_window, 2);
    EXPECT_FALSE(r.hardware.empty());
}
