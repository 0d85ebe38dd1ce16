#pragma once

#include "gekc/bench.hpp"
#include "gekc/checkpoint.hpp"
#include "gekc/constraints.hpp"
#include "gekc/evaluation.hpp"
#include "gekc/gradcheck.hpp"
#include "gekc/kg.hpp"
#include "gekc/model.hpp"
#include "gekc/sampling.hpp"
#include "gekc/train.hpp"
#include "gekc/version.hpp"
