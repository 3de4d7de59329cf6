#include <set>

#include "doctest.h"
#include "veegan/grad_suite.hpp"

using namespace veegan;

TEST_CASE("grad-check suite covers every primitive and passes") {
    const auto rep = gradcheck::run_suite(2, 1e-4);
    std::set<std::string> names;
    for (const auto& c : rep.cases) {
        INFO(c.name << " " << c.max_error);
        CHECK(c.ok);
        names.insert(c.name);
    }
    for (const char* op : {"matmul_lhs", "add_bcast", "sub", "mul", "neg", "scale", "add_scalar", "tanh", "relu", "leaky_relu",
                           "sigmoid", "log_sigmoid", "softplus", "sum", "mean", "squared_l2", "sum_rows", "broadcast_rows",
                           "expand_scalar", "concat_cols", "slice_cols", "pad_cols", "mlp_veegan_generator_loss",
                           "mlp_joint_lr_loss"})
        CHECK_MESSAGE(names.count(op) == 1, op);
    CHECK(rep.pass());
}

TEST_CASE("an impossible tolerance fails the suite") {
    const auto rep = gradcheck::run_suite(1, 0.0);
    CHECK_FALSE(rep.pass());
    CHECK(gradcheck::SuiteReport{}.pass() == false);
}
