#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ulfe/gan/discriminator.hpp"
#include "ulfe/gan/generator.hpp"
#include "ulfe/gan/losses.hpp"
#include "ulfe/metrics/metrics.hpp"
#include "ulfe/seg/model.hpp"
#include "ulfe/vol/volume.hpp"

namespace ulfe::gan {

struct InferOptions {
  index_t slab_depth = 40;  // clamped to the volume depth when larger
  index_t stride = 5;
  // Conditioning is recomputed per slab by default so inference matches training
  // statistics; the flag switches to one segmentation pass over the whole volume.
  bool full_volume_conditioning = false;
};

struct CycleGanTrainConfig {
  index_t epochs = 30;
  double lr = 2e-4;
  double adam_beta1 = 0.5;
  std::uint64_t seed = 0;
  index_t slab_depth = 40;  // clamped to the volume depth when larger
  CycleLossWeights weights;
  double psnr_cap_db = 50.0;
  metrics::SsimParams ssim;
  InferOptions val_infer;
  std::string checkpoint_dir;  // empty: keep no checkpoints
  bool resume = false;
  // Stop (resumably) after this many epochs in one call; -1 trains to the end.
  index_t max_epochs_per_run = -1;
};

// Per-epoch means of every loss term, the paired-penalty weight in force, and the
// validation score of the enhancement generator.
struct CycleGanEpochStats {
  index_t epoch = 0;
  double d_hf = 0, d_ulf = 0;
  double g_adv_u2h = 0, g_adv_h2u = 0;
  double cycle_ulf = 0, cycle_hf = 0;
  double paired = 0;
  double lambda_paired = 0;
  double g_total = 0;
  double val_weighted = 0;
};

struct CycleGanResult {
  std::vector<CycleGanEpochStats> curve;
  index_t best_epoch = -1;
  double best_val_weighted = 0;
};

std::string cyclegan_curve_csv(const std::vector<CycleGanEpochStats>& curve);

// Adversarial training of both generators against per-domain patch critics with
// cycle-consistency and a phased-in paired penalty. Segmentation conditioning is
// computed with the frozen model and enters as constants; the trainer fails if the
// segmentation weights change while it runs. Every subject must carry paired HF
// volumes. On return the four networks hold the best-validation weights with
// gradients disabled.
CycleGanResult train_cyclegan(Generator<real_t>& g_u2h, Generator<real_t>& g_h2u,
                              PatchDiscriminator<real_t>& d_hf, PatchDiscriminator<real_t>& d_ulf,
                              const seg::SwinSeg<real_t>& seg_model,
                              const std::vector<vol::Subject>& train_set,
                              const std::vector<vol::Subject>& val_set,
                              const CycleGanTrainConfig& cfg);

// Slab-wise enhancement plumbing shared by inference and validation: runs `slab_fn`
// ((3,d,H,W) -> (3,d,H,W)) over every slab of the subject's stacked ULF contrasts and
// stitches the overlap-averaged result back into per-contrast volumes.
std::map<std::string, vol::Volume> enhance_contrasts(
    const std::function<Tensor<real_t>(const Tensor<real_t>&)>& slab_fn, const vol::Subject& s,
    const InferOptions& opts);

// Deterministic full-volume enhancement: segmentation conditioning (per slab or whole
// volume), generator forward, overlap-averaged stitching. The returned subject keeps
// the input ULF volumes and masks; its HF slots hold the enhanced estimates.
vol::Subject infer_cyclegan(const Generator<real_t>& g_u2h, const seg::SwinSeg<real_t>& seg_model,
                            const vol::Subject& s, const InferOptions& opts = {});

// Mean weighted score of enhanced estimates against the paired references, masked
// when a head mask is present.
double validate_weighted(const Generator<real_t>& g_u2h, const seg::SwinSeg<real_t>& seg_model,
                         const std::vector<vol::Subject>& val_set, const InferOptions& opts,
                         const metrics::SsimParams& params = {});

}  // namespace ulfe::gan
