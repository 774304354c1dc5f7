// Copyright 2026 The impc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "impc/autodiff.hpp"

#include <algorithm>

namespace impc {

double Gradient::operator[](const Var& v) const {
  if (v.is_constant() || tape_ == nullptr) return 0.0;
  if (v.tape() != tape_) throw TapeError("Var is not on the differentiated tape");
  const auto i = static_cast<std::size_t>(v.index());
  return i < adjoints_.size() ? adjoints_[i] : 0.0;
}

Var Tape::record(OpKind kind, double value, std::span<const Var> inputs,
                 std::span<const double> partials) {
  if (inputs.size() != partials.size()) {
    throw TapeError("record: " + std::to_string(inputs.size()) + " inputs but " +
                    std::to_string(partials.size()) + " partials");
  }
  bool any = false;
  for (const Var& v : inputs) {
    if (v.is_constant()) continue;
    check_owner(v);
    any = true;
  }
  if (!any) return Var(value);
  push_node(kind);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].is_constant()) push_parent(inputs[i].index_, partials[i]);
  }
  return seal(value);
}

void Tape::clear() {
  kinds_.clear();
  parents_.clear();
  partials_.clear();
  offsets_.assign(1, 0);
}

void Tape::backward_into(const Var& seed, std::vector<double>& adjoints) const {
  if (seed.is_constant()) {
    adjoints.assign(kinds_.size(), 0.0);
    return;
  }
  if (seed.tape() != this) throw TapeError("backward: seed is from a different tape");
  const auto n = static_cast<std::size_t>(seed.index()) + 1;
  adjoints.assign(kinds_.size(), 0.0);
  adjoints[n - 1] = 1.0;
  for (std::size_t i = n; i-- > 0;) {
    const double a = adjoints[i];
    if (a == 0.0) continue;
    const std::uint32_t end = offsets_[i + 1];
    for (std::uint32_t j = offsets_[i]; j < end; ++j) {
      adjoints[static_cast<std::size_t>(parents_[j])] += partials_[j] * a;
    }
  }
}

Gradient Tape::backward(const Var& seed) const {
  std::vector<double> adjoints;
  backward_into(seed, adjoints);
  return Gradient(this, std::move(adjoints));
}

Var tape_record(OpKind kind, double value, std::span<const Var> inputs,
                std::span<const double> partials) {
  Tape* owner = nullptr;
  for (const Var& v : inputs) {
    if (v.is_constant()) continue;
    if (owner == nullptr) {
      owner = v.tape();
    } else if (owner != v.tape()) {
      throw TapeError("tape_record: inputs from different tapes");
    }
  }
  if (owner == nullptr) return Var(value);
  return owner->record(kind, value, inputs, partials);
}

Gradient backward(const Tape& tape, const Var& seed) { return tape.backward(seed); }

Var norm(std::span<const Var> xs) {
  double s = 0.0;
  for (const Var& x : xs) s += x.value() * x.value();
  const double n = std::sqrt(s);
  std::vector<double> partials(xs.size(), 0.0);
  if (n > 0.0) {
    for (std::size_t i = 0; i < xs.size(); ++i) partials[i] = xs[i].value() / n;
  }
  return tape_record(OpKind::kNorm, n, xs, partials);
}

}  // namespace impc
