#pragma once

#include <cstdint>
#include <utility>

#include "cardioclr/anatomy.hpp"
#include "cardioclr/contrastive.hpp"
#include "cardioclr/phantom.hpp"
#include "cardioclr/rng.hpp"

namespace cardioclr {

struct MaskingConfig {
  std::size_t dilate_px = 2;
  // Segmentation-error emulation applied to the cardiac mask before use.
  std::size_t perturb_erode_px = 0;
  std::size_t perturb_dilate_px = 0;
  double perturb_hole_rate = 0.0;
  std::uint64_t perturb_seed = 0;

  void validate() const {
    if (!(perturb_hole_rate >= 0.0 && perturb_hole_rate <= 1.0)) {
      throw ValidationError("masking.perturb.hole_rate", "must lie in [0,1]");
    }
  }
  bool perturbs() const { return perturb_erode_px || perturb_dilate_px || perturb_hole_rate > 0.0; }
  friend bool operator==(const MaskingConfig&, const MaskingConfig&) = default;
};

enum class Phase { ED, ES };

inline BinaryMask cardiac_mask_for(const CaseRecord& c, Phase phase, const MaskingConfig& m) {
  BinaryMask mask = build_cardiac_mask(phase == Phase::ED ? c.ed_mask : c.es_mask);
  if (m.perturbs()) {
    Rng rng(StreamKey(m.perturb_seed)("perturb")(c.case_id)(phase == Phase::ED ? 0 : 1));
    mask = perturb_mask(mask, rng, m.perturb_erode_px, m.perturb_dilate_px, m.perturb_hole_rate);
  }
  return mask;
}

// The frame a model sees for one phase under the given input mode.
inline Tensor<float> model_input(const CaseRecord& c, Phase phase, InputMode mode, const MaskingConfig& m) {
  const Tensor<float>& frame = phase == Phase::ED ? c.ed_frame : c.es_frame;
  if (mode == InputMode::Full) return frame;
  return apply_mask(frame, cardiac_mask_for(c, phase, m), m.dilate_px);
}

}  // namespace cardioclr
