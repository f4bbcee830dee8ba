#ifndef FCN_TRAINER_HPP
#define FCN_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fcn/box.hpp"
#include "fcn/net.hpp"
#include "fcn/rng.hpp"
#include "fcn/score_map.hpp"
#include "fcn/tensor.hpp"

namespace fcn {

struct AnnotatedImage {
    std::string id;
    Tensor3 image;
    std::vector<Box> boxes;  // empty for background images
};

struct Dataset {
    std::vector<AnnotatedImage> annotated;    // at least one face each
    std::vector<AnnotatedImage> backgrounds;  // no faces
};

enum class SampleKind { Plain, HardNegative, HardPositive, PartialOverlap };

struct TrainSample {
    Tensor3 patch;  // window x window x 3
    int label = 0;  // face=1, background=0
    SampleKind kind = SampleKind::Plain;
    std::string source_image;
    Box source_box;
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 0.05;
    double lr_decay = 0.1;  // applied once at 2/3 of the epochs
    double momentum = 0.9;
    double neg_pos_ratio = 800.0 / 60.0;
    uint64_t seed = 42;
    int positives = 60;
    int negatives = 800;

    void validate() const;
};

struct TrainLogRow {
    int epoch = 0;
    double loss = 0.0;
    double train_acc = 0.0;
};

// Crops box (clamped) from the image and resizes to out_size x out_size.
Tensor3 extract_patch(const Tensor3& image, const Box& box, int out_size);

// Stage-1 regime: positives are ground-truth boxes resized to the window,
// negatives are random background crops (IoU < 0.1 against any face box on
// the source image). Deterministic under cfg.seed.
std::vector<TrainSample> assemble_stage1_samples(const std::vector<AnnotatedImage>& annotated,
                                                 const std::vector<AnnotatedImage>& backgrounds,
                                                 int window, const TrainConfig& cfg);

// Verification regime: same counts, but positives are 25%-context-padded
// face crops, matching verify_stage geometry.
std::vector<TrainSample> assemble_verification_samples(
    const std::vector<AnnotatedImage>& annotated, const std::vector<AnnotatedImage>& backgrounds,
    int window, const TrainConfig& cfg, double context_pad = 0.25);

// Minibatch SGD with momentum on mean cross-entropy of the 1x1 heatmap.
// Per-sample gradients may be computed on `jobs` threads; accumulation is in
// fixed sample order, so the result is bit-identical for any job count.
// Throws if the loss diverges, naming the epoch.
NetworkSpec train(const NetworkSpec& net, const std::vector<TrainSample>& samples,
                  const TrainConfig& cfg, std::vector<TrainLogRow>* log = nullptr, int jobs = 1);

// Proposal generator interface for mining: previous-stage detections on one
// image, scores in [0,1].
using StageDetector = std::function<std::vector<Proposal>(const AnnotatedImage&)>;

struct MiningConfig {
    double score_threshold = 0.5;  // previous-stage score cutoff
    double hard_positive_iou = 0.5;
    double band_lo = 0.1;  // partial-overlap band, inclusive
    double band_hi = 0.3;
    double context_pad = 0.25;
    int jobs = 1;
};

// Hard-example mining against a previous stage:
//  - background-image proposals scoring >= threshold -> hard negatives
//  - face-image proposals with IoU >= 0.5 scoring < threshold -> hard positives
//  - face-image proposals with IoU in [0.1, 0.3] -> partial-overlap negatives
// Each mined sample satisfies exactly one rule. Patches are context-padded
// crops resized to model_stage's window.
std::vector<TrainSample> mine_hard_examples(const NetworkSpec& model_stage,
                                            const std::vector<AnnotatedImage>& annotated,
                                            const std::vector<AnnotatedImage>& backgrounds,
                                            const StageDetector& prev_stage,
                                            const MiningConfig& cfg);

// Mined set mixed with a 25% replay of the plain samples. When mining came
// back short on positives, plain positives are topped up so the class is
// never starved. Order is shuffled deterministically.
std::vector<TrainSample> mix_training_set(const std::vector<TrainSample>& plain,
                                          const std::vector<TrainSample>& mined, uint64_t seed,
                                          double replay_fraction = 0.25);

struct SynthParams {
    int width = 320;
    int height = 240;
    int min_side = 30;
    int max_side = 0;  // 0: min(300, 60% of the short edge)
    double background_fraction = 0.2;
    int max_faces = 3;
    int max_distractors = 6;
};

// Procedural dataset: textured backgrounds with distractor shapes, plus
// planted high-contrast "face" patterns (ringed disk, two eye blobs, mouth
// bar) with exact ground-truth boxes. Deterministic under seed.
Dataset synth_dataset(uint64_t seed, int n_images, const SynthParams& params);

}  // namespace fcn

#endif
