// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gpa/attention.hpp"
#include "gpa/autodiff.hpp"
#include "gpa/bench.hpp"
#include "gpa/config.hpp"
#include "gpa/cost.hpp"
#include "gpa/errors.hpp"
#include "gpa/memory.hpp"
#include "gpa/parallel.hpp"
#include "gpa/random.hpp"
#include "gpa/spatial.hpp"
#include "gpa/tensor.hpp"
#include "gpa/tensor_io.hpp"
#include "gpa/viz.hpp"
