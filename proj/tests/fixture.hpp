#pragma once

#include <vector>

#include "magmeta/effects.hpp"
#include "oracle_values.hpp"

namespace testing_fixture {

inline std::vector<magmeta::EffectRecord> meta_fixture() {
  std::vector<magmeta::EffectRecord> out;
  for (const auto& s : oracle::kMetaFixture) {
    out.push_back(magmeta::derive_effect(magmeta::StudySummary::from_d(s.n_t, s.n_c, s.d)));
  }
  return out;
}

}  // namespace testing_fixture
