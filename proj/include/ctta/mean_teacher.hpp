#pragma once

#include "ctta/net.hpp"

namespace ctta {

/// Student/teacher/source triple. The source copy is frozen at
/// construction; the teacher tracks the student through an EMA.
struct ModelPair {
  ParamSet student;
  ParamSet teacher;
  ParamSet source;
  double alpha_mt = 0.99;
};

ModelPair init_pair(const ParamSet& source_params, double alpha_mt);

/// teacher <- alpha * teacher + (1 - alpha) * student, elementwise.
void ema_update(ModelPair& pair);

}  // namespace ctta
