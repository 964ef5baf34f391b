/* Copyright 2026 The distplan Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <string>

#include "distplan/mesh.hpp"

namespace distplan {
namespace {

TEST(LogicalMesh, DeviceIndexIsRowMajor) {
  const auto m = LogicalMesh::create({{"data", 2}, {"model", 3}});
  EXPECT_EQ(m.device_count(), 6);
  EXPECT_EQ(m.device_index({1, 2}), 5);
  EXPECT_EQ(m.device_index({1, 0}), 3);
  for (std::int64_t d = 0; d < m.device_count(); ++d) EXPECT_EQ(m.device_index(m.coords(d)), d);
  EXPECT_EQ(m.to_string(), "Mesh(data=2, model=3)");
}

TEST(LogicalMesh, RejectsBadAxes) {
  EXPECT_THROW(LogicalMesh::create({{"data", 0}}), ValidationError);
  EXPECT_THROW(LogicalMesh::create({{"data", 2}, {"data", 2}}), ValidationError);
  EXPECT_THROW(LogicalMesh::create({{"", 2}}), ValidationError);
}

TEST(PartitionSpec, TextRoundTrip) {
  const PartitionSpec s{{{"data"}, {"model", "expert"}, {}}};
  EXPECT_EQ(s.to_string(), "P(axis0=data, axis1=model+expert, axis2=~)");
  EXPECT_EQ(parse_partition_spec(s.to_string()), s);
  EXPECT_EQ(parse_partition_spec("P()"), PartitionSpec{});
  EXPECT_THROW(parse_partition_spec("P(axis1=data)"), ValidationError);
  EXPECT_THROW(parse_partition_spec("P(axis0=data, axis1=data)"), ValidationError);
  EXPECT_THROW(parse_partition_spec("Q(axis0=~)"), ValidationError);
  EXPECT_THROW(parse_partition_spec("P(axis0=a++b)"), ValidationError);
}

TEST(PartitionSpec, ValidatesAgainstMesh) {
  const auto m = LogicalMesh::create({{"data", 2}});
  EXPECT_THROW((PartitionSpec{{{"model"}}}.validate(m)), ValidationError);
  EXPECT_THROW((PartitionSpec{{{"data"}}}.validate(m, 2)), ValidationError);
  EXPECT_NO_THROW((PartitionSpec{{{"data"}, {}}}.validate(m, 2)));
}

TEST(ShardShape, DividesByAxisProducts) {
  const auto m = LogicalMesh::create({{"data", 2}, {"model", 4}, {"expert", 2}});
  const TensorShape t{{8, 16, 6}, {}, DType::kFloat32};
  const auto local = shard_shape(t, PartitionSpec{{{"data"}, {"model", "expert"}, {}}}, m);
  EXPECT_EQ(local.dims, (std::vector<std::int64_t>{4, 2, 6}));
}

TEST(ShardShape, NamesIndivisibleAxis) {
  const auto m = LogicalMesh::create({{"model", 4}});
  const TensorShape t{{8, 6}, {}, DType::kFloat32};
  try {
    shard_shape(t, PartitionSpec{{{}, {"model"}}}, m);
    FAIL() << "indivisible split accepted";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("axis 1"), std::string::npos);
    EXPECT_NE(msg.find("6"), std::string::npos);
    EXPECT_NE(msg.find("4"), std::string::npos);
  }
}

TEST(TensorParallel, HeadsDivisibility) {
  TransformerConfig c;
  c.hidden = 64;
  c.heads = 8;
  for (std::int64_t tp = 1; tp <= 16; ++tp) {
    if (8 % tp == 0) {
      EXPECT_NO_THROW(validate_tensor_parallel(c, tp)) << tp;
    } else {
      EXPECT_THROW(validate_tensor_parallel(c, tp), ValidationError) << tp;
    }
  }
}

}  // namespace
}  // namespace distplan
