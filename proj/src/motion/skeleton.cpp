#include "diffdance/motion/skeleton.hpp"

#include <set>

#include "diffdance/core/error.hpp"

namespace diffdance {

void SkeletonSpec::validate() const {
  const int j = joint_count();
  if (j < 1) throw DomainError("skeleton: no joints");
  if (static_cast<int>(offset.size()) != j || static_cast<int>(names.size()) != j) {
    throw DomainError("skeleton: names/offsets do not match joint count");
  }
  if (root != 0 || parent[0] != -1) throw DomainError("skeleton: joint 0 must be the root");
  for (int k = 1; k < j; ++k) {
    if (parent[k] < 0 || parent[k] >= k) throw DomainError("skeleton: parent indices must precede children");
  }
  for (const auto& o : offset) {
    if (!o.allFinite()) throw DomainError("skeleton: non-finite bone offset");
  }
  std::set<int> seen;
  auto tag = [&](const std::vector<int>& set) {
    for (int idx : set) {
      if (idx < 0 || idx >= j) throw DomainError("skeleton: key tag out of range");
      if (idx == root || !seen.insert(idx).second) throw DomainError("skeleton: key tag sets overlap");
    }
  };
  tag(feet);
  tag(hands);
}

SkeletonSpec SkeletonSpec::desk9() {
  SkeletonSpec s;
  s.names = {"root", "l_knee", "l_foot", "r_knee", "r_foot", "l_elbow", "l_hand", "r_elbow", "r_hand"};
  s.parent = {-1, 0, 1, 0, 3, 0, 5, 0, 7};
  s.offset = {
      {0.0, 0.0, 0.0},     {0.10, -0.45, 0.0}, {0.0, -0.45, 0.0},  {-0.10, -0.45, 0.0},
      {0.0, -0.45, 0.0},   {0.45, 0.50, 0.0},  {0.27, 0.0, 0.0},   {-0.45, 0.50, 0.0},
      {-0.27, 0.0, 0.0},
  };
  s.feet = {2, 4};
  s.hands = {6, 8};
  return s;
}

SkeletonSpec SkeletonSpec::smpl24() {
  SkeletonSpec s;
  s.names = {"pelvis",     "l_hip",      "r_hip",    "spine1",   "l_knee",  "r_knee",
             "spine2",     "l_ankle",    "r_ankle",  "spine3",   "l_foot",  "r_foot",
             "neck",       "l_collar",   "r_collar", "head",     "l_shoulder", "r_shoulder",
             "l_elbow",    "r_elbow",    "l_wrist",  "r_wrist",  "l_hand",  "r_hand"};
  s.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
  s.offset = {
      {0.0, 0.0, 0.0},       {0.06, -0.09, 0.0},    {-0.06, -0.09, 0.0},  {0.0, 0.11, 0.0},
      {0.04, -0.38, 0.0},    {-0.04, -0.38, 0.0},   {0.0, 0.14, 0.0},     {0.0, -0.40, -0.04},
      {0.0, -0.40, -0.04},   {0.0, 0.05, 0.02},     {0.02, -0.06, 0.12},  {-0.02, -0.06, 0.12},
      {0.0, 0.21, -0.03},    {0.08, 0.12, -0.02},   {-0.08, 0.12, -0.02}, {0.0, 0.09, 0.05},
      {0.12, 0.04, -0.01},   {-0.12, 0.04, -0.01},  {0.26, 0.0, 0.0},     {-0.26, 0.0, 0.0},
      {0.25, 0.0, 0.0},      {-0.25, 0.0, 0.0},     {0.08, 0.0, 0.0},     {-0.08, 0.0, 0.0},
  };
  s.feet = {7, 8, 10, 11};
  s.hands = {20, 21, 22, 23};
  return s;
}

SkeletonSpec SkeletonSpec::by_name(const std::string& name) {
  if (name == "desk9") return desk9();
  if (name == "smpl24") return smpl24();
  throw DomainError("unknown skeleton '" + name + "'");
}

}  // namespace diffdance
