#include "ctta/mean_teacher.hpp"

#include <stdexcept>

namespace ctta {

ModelPair init_pair(const ParamSet& source_params, double alpha_mt) {
  if (!(alpha_mt >= 0.0 && alpha_mt <= 1.0))
    throw std::invalid_argument("init_pair: alpha_mt must be in [0,1]");
  ModelPair pair;
  pair.student = source_params;
  pair.teacher = source_params;
  pair.source = source_params;
  pair.alpha_mt = alpha_mt;
  return pair;
}

void ema_update(ModelPair& pair) {
  const double a = pair.alpha_mt;
  auto blend = [a](Layer& t, const Layer& s) {
    t.W = a * t.W + (1.0 - a) * s.W;
    t.b = a * t.b + (1.0 - a) * s.b;
  };
  for (size_t i = 0; i < pair.teacher.trunk.size(); ++i)
    blend(pair.teacher.trunk[i], pair.student.trunk[i]);
  blend(pair.teacher.proj, pair.student.proj);
  blend(pair.teacher.cls, pair.student.cls);
}

}  // namespace ctta
