#pragma once

// Subject-wise cross-validation folds.

#include <stdexcept>
#include <string>
#include <vector>

namespace gaitphase {

inline constexpr std::size_t kFolds = 5;

struct Fold {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// Subjects (in the given order) are cut into 5 contiguous test groups; the
// validation subject is the one following the test group, cyclically, and
// everyone else trains. With 10 subjects fold k tests {2k, 2k+1}.
inline std::vector<Fold> loocv_splits(const std::vector<int>& subjects) {
  const std::size_t n = subjects.size();
  if (n < kFolds) throw std::invalid_argument("loocv_splits: need at least 5 subjects, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (subjects[i] == subjects[j]) throw std::invalid_argument("loocv_splits: duplicate subject id");

  std::vector<Fold> folds(kFolds);
  std::size_t begin = 0;
  for (std::size_t k = 0; k < kFolds; ++k) {
    const std::size_t size = n / kFolds + (k < n % kFolds ? 1 : 0);
    const std::size_t end = begin + size;
    const std::size_t val = end % n;
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= begin && i < end)
        folds[k].test.push_back(subjects[i]);
      else if (i == val)
        folds[k].val.push_back(subjects[i]);
      else
        folds[k].train.push_back(subjects[i]);
    }
    begin = end;
  }
  return folds;
}

}  // namespace gaitphase
