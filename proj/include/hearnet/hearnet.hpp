// Copyright 2026 The HearNet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Umbrella header.

#include "hearnet/audiogram.hpp"
#include "hearnet/compensation.hpp"
#include "hearnet/corpus.hpp"
#include "hearnet/dsp/spectral.hpp"
#include "hearnet/dsp/wav.hpp"
#include "hearnet/losses.hpp"
#include "hearnet/metrics.hpp"
#include "hearnet/model/config.hpp"
#include "hearnet/model/network.hpp"
#include "hearnet/sources.hpp"
#include "hearnet/synthesis.hpp"
#include "hearnet/training.hpp"
