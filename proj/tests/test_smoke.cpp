// Compile-and-link smoke: every public header, one tiny end-to-end forward.
#include <gtest/gtest.h>

#include "pnx/ablation.hpp"
#include "pnx/augment.hpp"
#include "pnx/config.hpp"
#include "pnx/data.hpp"
#include "pnx/decoder.hpp"
#include "pnx/encoder.hpp"
#include "pnx/errors.hpp"
#include "pnx/evaluation.hpp"
#include "pnx/fusion.hpp"
#include "pnx/image_io.hpp"
#include "pnx/linalg.hpp"
#include "pnx/model.hpp"
#include "pnx/nn/act.hpp"
#include "pnx/nn/attention.hpp"
#include "pnx/nn/common.hpp"
#include "pnx/nn/conv.hpp"
#include "pnx/nn/convlstm.hpp"
#include "pnx/nn/norm.hpp"
#include "pnx/objective.hpp"
#include "pnx/plot.hpp"
#include "pnx/report.hpp"
#include "pnx/rng.hpp"
#include "pnx/synth.hpp"
#include "pnx/sysinfo.hpp"
#include "pnx/tensor.hpp"
#include "pnx/textfmt.hpp"
#include "pnx/training.hpp"

using namespace pnx;

TEST(Smoke, TinyForwardBackward) {
    model::ModelConfig cfg;
    cfg.frames = 2;
    cfg.input_size = 32;
    cfg.encoder_channels = {4, 8, 16};
    cfg.encoder_depths = {1, 1, 1};
    cfg.seed = 1;
    model::VideoSegmenter net(cfg);

    RandomStream rs(42);
    Tensor x({1, 2, 3, 32, 32});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = rs.uniform();
    Tensor logits = net.forward(x, /*training=*/true);
    ASSERT_EQ(logits.shape_str(), "(1,2,1,32,32)");
    EXPECT_TRUE(logits.all_finite());

    Tensor target = Tensor::zeros(logits.shape());
    Tensor glogits;
    auto loss = objective::dice_bce_loss(flatten_clip(logits),
                                         flatten_clip(target), &glogits);
    EXPECT_TRUE(std::isfinite(loss.total));
    net.zero_grad();
    net.backward(unflatten_clip(glogits, 1, 2));
    double gsum = 0;
    for (auto* p : net.parameters())
        if (p->trainable && p->grad.numel()) gsum += p->grad.abs_max();
    EXPECT_GT(gsum, 0.0);
}
