#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedate/numerics.hpp"

namespace fedate {

// One study's rows. covariates is n x d, treatment holds 0/1.
struct StudyDataset {
  int study_id = 1;
  Matrix covariates;
  Eigen::VectorXi treatment;
  Vector outcome;

  std::size_t n() const { return static_cast<std::size_t>(outcome.size()); }
  std::size_t n_arm(int arm) const;
  Eigen::Index d() const { return covariates.cols(); }
  // Throws Value/Dimension errors when the fields disagree.
  void validate() const;
};

struct FederatedDataset {
  std::vector<StudyDataset> studies;
  Eigen::Index d = 0;

  std::size_t K() const { return studies.size(); }
  std::size_t n() const;
  std::size_t n_arm(int arm) const;
  void validate() const;
};

// Rows of one arm: intercept column first, then the covariates.
struct ArmView {
  Matrix design;
  Vector response;

  std::size_t rows() const { return static_cast<std::size_t>(response.size()); }
};

// (1, X) for every row.
Matrix with_intercept(const Matrix& covariates);

ArmView split_by_arm(const StudyDataset& ds, int arm);

// Arm rows of every study stacked in study order.
ArmView pooled_arm(const FederatedDataset& fed, int arm);

// Per-study arm views, in study order.
std::vector<ArmView> arm_views(const FederatedDataset& fed, int arm);

// Appends K-1 study indicators (study 1 is the reference) to every study's covariates.
FederatedDataset augment_dummies(const FederatedDataset& fed);

struct RankConditions {
  bool local_full_rank = false;
  bool federated_full_rank = false;
};

RankConditions check_conditions(const FederatedDataset& fed,
                                double rank_tolerance = kDefaultRankTolerance);

struct CsvSchema {
  std::string study_column = "study_id";
  std::string treatment_column = "w";
  std::string outcome_column = "y";
  std::string covariate_prefix = "x";
};

// Study ids are remapped densely to 1..K in ascending order of the raw id; rows
// keep file order within a study.
FederatedDataset parse_csv(std::istream& in, const CsvSchema& schema = {});
FederatedDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

// Header study_id,w,y,x1..xd; numbers at 17 significant digits.
void write_csv(const FederatedDataset& fed, std::ostream& out);
void emit_csv(const FederatedDataset& fed, const std::filesystem::path& path);

}  // namespace fedate
