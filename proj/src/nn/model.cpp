#include "slotbench/model.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "slotbench/errors.hpp"

namespace slotbench {

double LossTerms::term(const std::string& name) const {
  for (const auto& [n, t] : terms) {
    if (n == name) return t.item<double>();
  }
  throw InputError("no loss term named '" + name + "'");
}

at::Generator SlotModel::make_generator(std::uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

}  // namespace slotbench
