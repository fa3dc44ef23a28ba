#include <gtest/gtest.h>

#include "koopdec/koopdec.hpp"

using namespace koopdec;

TEST(FormatReal, TwelveSignificantDigits) {
    EXPECT_EQ(io::format_real(0.0), "0");
    EXPECT_EQ(io::format_real(-0.0), "0");
    EXPECT_EQ(io::format_real(1.0 / 3.0), "0.333333333333");
    EXPECT_EQ(io::format_real(-2.5e-20), "-2.5e-20");
    EXPECT_EQ(io::format_real(123456789012345.0), "1.23456789012e+14");
}

TEST(MatrixCsv, RoundTrip) {
    Matrix m(2, 3);
    m << 1.0, -0.25, 3.5e-7, 0.0, 2.0, -1e10;
    const Matrix back = io::matrix_from_csv(io::matrix_to_csv(m));
    EXPECT_EQ(back, m);
}

TEST(MatrixCsv, RejectsRaggedAndGarbage) {
    EXPECT_THROW(io::matrix_from_csv("1,2\n3\n"), Error);
    EXPECT_THROW(io::matrix_from_csv("1,abc\n"), Error);
    EXPECT_THROW(io::matrix_from_csv("1,nan\n"), Error);
    EXPECT_THROW(io::matrix_from_csv("1,2x\n"), Error);
}

TEST(MatrixCsv, AcceptsCrLf) {
    const Matrix m = io::matrix_from_csv("1,2\r\n3,4\r\n");
    EXPECT_EQ(m.rows(), 2);
    EXPECT_EQ(m(1, 0), 3.0);
}

TEST(MatrixJson, ExactRoundTrip) {
    Matrix m(2, 2);
    m << 1.0 / 3.0, -2.0 / 7.0, 1e-300, 5.0;
    EXPECT_EQ(io::matrix_from_json(io::matrix_to_json_exact(m)), m);
    const Matrix rounded = io::matrix_from_json(io::matrix_to_json(m));
    EXPECT_NEAR(rounded(0, 0), 1.0 / 3.0, 1e-12);
    EXPECT_NE(rounded(0, 0), 1.0 / 3.0);
}

TEST(MatrixJson, RejectsWrongLength) {
    const io::json j{{"rows", 2}, {"cols", 2}, {"data", {1.0, 2.0, 3.0}}};
    EXPECT_THROW(io::matrix_from_json(j), Error);
}

TEST(TrajectoryCsv, RoundTripKeepsTrajectoryBoundaries) {
    Matrix s1(2, 4), s2(2, 3);
    s1 << 0, 1, 2, 3, 0.5, 0.25, 0.125, 0.0625;
    s2 << 9, 8, 7, -1, -2, -3;
    Matrix w1(1, 3), w2(1, 2);
    w1 << 0.1, 0.2, 0.3;
    w2 << -0.1, -0.2;
    TrajectoryDataset data;
    append_trajectory(data, s1, w1, 0);
    append_trajectory(data, s2, w2, 1);

    const auto text = trajectories_to_csv(data);
    EXPECT_EQ(text.substr(0, text.find('\n')), "t,x_1,x_2,w_1");
    const auto back = trajectories_from_csv(text, 2, 1);
    ASSERT_EQ(back.snapshots.size(), 5u);
    EXPECT_EQ(back.trajectory_count(), 2u);
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_EQ(back.snapshots[k].x, data.snapshots[k].x);
        EXPECT_EQ(back.snapshots[k].w, data.snapshots[k].w);
        EXPECT_EQ(back.snapshots[k].x_next, data.snapshots[k].x_next);
        EXPECT_EQ(back.snapshots[k].trajectory, data.snapshots[k].trajectory);
    }
}

TEST(TrajectoryCsv, RejectsBadHeader) {
    EXPECT_THROW(trajectories_from_csv("time,x_1,w_1\n0,1,2\n", 1, 1), Error);
    EXPECT_THROW(trajectories_from_csv("t,x_1,w_1\n0,1\n", 1, 1), Error);
}

TEST(Normalization, RoundTripAndInputZeroPreserved) {
    Matrix s(2, 5);
    s << 1, 2, 3, 4, 5, 10, 30, 20, 50, 40;
    Matrix w(1, 4);
    w << 2, -4, 6, 0;
    TrajectoryDataset data;
    append_trajectory(data, s, w, 0);
    split_first(data, 4);
    const auto scale = fit_normalization(data);
    const Vector x = (Vector(2) << 3.3, -7.0).finished();
    EXPECT_LT((scale.denormalize_state(scale.normalize_state(x)) - x).norm(), 1e-14);
    EXPECT_EQ(scale.normalize_input(Vector::Zero(1)), Vector::Zero(1));
    const auto back = Normalization::from_json(scale.to_json());
    EXPECT_EQ(back.state_factor, scale.state_factor);
    EXPECT_EQ(back.state_offset, scale.state_offset);
}
