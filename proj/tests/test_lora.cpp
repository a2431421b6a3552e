#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <stdexcept>

#include "fedlora/linalg.hpp"
#include "fedlora/lora.hpp"
#include "fedlora/matrix.hpp"

using fedlora::LoraAdapter;
using fedlora::LoraLayer;
using fedlora::Matrix;

TEST_CASE("init_adapter starts with a zero update") {
    const LoraAdapter adapter = fedlora::init_adapter(6, 4, 2, 8.0, 42);
    CHECK(adapter.b.rows() == 6);
    CHECK(adapter.b.cols() == 2);
    CHECK(adapter.a.rows() == 2);
    CHECK(adapter.a.cols() == 4);
    CHECK(fedlora::max_abs(adapter.b) == 0.0);
    CHECK(fedlora::max_abs(adapter.a) > 0.0);  // Gaussian init, not zero
    CHECK(fedlora::max_abs(adapter.a) < 0.2);  // stddev 0.02, so entries are small
}

TEST_CASE("init_adapter is deterministic per seed") {
    const LoraAdapter x = fedlora::init_adapter(5, 7, 3, 4.0, 9);
    const LoraAdapter y = fedlora::init_adapter(5, 7, 3, 4.0, 9);
    const LoraAdapter z = fedlora::init_adapter(5, 7, 3, 4.0, 10);
    CHECK(x.a == y.a);
    CHECK(x.b == y.b);
    CHECK_FALSE(x.a == z.a);
}

TEST_CASE("init_adapter validates rank and alpha") {
    CHECK_THROWS_AS(fedlora::init_adapter(4, 4, 0, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(fedlora::init_adapter(4, 6, 5, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(fedlora::init_adapter(4, 4, 2, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(fedlora::init_adapter(4, 4, 2, -1.0, 1), std::invalid_argument);
}

TEST_CASE("scaling is alpha over rank") {
    LoraAdapter adapter;
    adapter.rank = 4;
    adapter.alpha = 8.0;
    CHECK(adapter.scaling() == 2.0);
}

TEST_CASE("effective_weight applies the scaled product once") {
    LoraLayer layer;
    layer.w0 = Matrix(2, 2, {1, 2, 3, 4});
    layer.adapter.rank = 1;
    layer.adapter.alpha = 2.0;  // s = 2
    layer.adapter.b = Matrix(2, 1, {1, 2});
    layer.adapter.a = Matrix(1, 2, {3, 4});
    // b*a = [[3,4],[6,8]]; w0 + 2*b*a = [[7,10],[15,20]]
    CHECK(fedlora::effective_weight(layer) == Matrix(2, 2, {7, 10, 15, 20}));
}

TEST_CASE("a fresh adapter leaves the effective weight at the base") {
    LoraLayer layer;
    layer.w0 = Matrix(3, 5, {1,  -2, 3,  -4, 5,  6,  -7, 8,
                             -9, 10, 11, 12, 13, 14, 15});
    layer.adapter = fedlora::init_adapter(3, 5, 2, 16.0, 77);
    CHECK(fedlora::effective_weight(layer) == layer.w0);
}

TEST_CASE("merge_residual folds the scaled correction into the base") {
    LoraLayer layer;
    layer.w0 = Matrix(2, 2, {1, 1, 1, 1});
    layer.adapter.rank = 2;
    layer.adapter.alpha = 1.0;  // s = 0.5
    layer.adapter.b = Matrix(2, 2);
    layer.adapter.a = Matrix(2, 2);

    fedlora::merge_residual(layer, Matrix(2, 2, {2, 4, 6, 8}));
    CHECK(layer.w0 == Matrix(2, 2, {2, 3, 4, 5}));

    CHECK_THROWS_AS(fedlora::merge_residual(layer, Matrix(1, 2)), std::invalid_argument);
}
