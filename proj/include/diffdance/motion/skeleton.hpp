#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace diffdance {

/// Joint tree with bone offsets and key-joint tags. Joints are stored in
/// topological order: parent[j] < j, and joint 0 is the root.
struct SkeletonSpec {
  std::vector<std::string> names;
  std::vector<int> parent;                 ///< -1 for the root
  std::vector<Eigen::Vector3d> offset;     ///< metres, in the parent's frame
  std::vector<int> feet;
  std::vector<int> hands;
  int root = 0;

  int joint_count() const { return static_cast<int>(parent.size()); }
  /// Channels per frame: a rotation-6d per joint, then root translation.
  int frame_width() const { return 6 * joint_count() + 3; }
  int translation_offset() const { return 6 * joint_count(); }

  /// Throws DomainError on a malformed tree, overlapping tags or bad offsets.
  void validate() const;

  /// 9 joints: root, two 2-joint legs ending in feet, two 2-joint arms
  /// ending in hands.
  static SkeletonSpec desk9();
  /// SMPL-24 topology with approximate neutral-body offsets.
  static SkeletonSpec smpl24();
  /// "desk9" or "smpl24".
  static SkeletonSpec by_name(const std::string& name);
};

}  // namespace diffdance
