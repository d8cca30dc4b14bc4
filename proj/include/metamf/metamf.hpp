// Copyright 2026 The metamf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "metamf/analysis.hpp"
#include "metamf/autodiff.hpp"
#include "metamf/checkpoint.hpp"
#include "metamf/dataset.hpp"
#include "metamf/errors.hpp"
#include "metamf/evaluation.hpp"
#include "metamf/model.hpp"
#include "metamf/rng.hpp"
#include "metamf/tensor.hpp"
#include "metamf/training.hpp"
#include "metamf/synthetic.hpp"
