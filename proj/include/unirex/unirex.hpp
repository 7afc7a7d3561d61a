#pragma once
//------------------------------------------------------------------------------
//
//   Copyright 2026 The Unirex Authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------

#include "unirex/autograd.hpp"
#include "unirex/bundle.hpp"
#include "unirex/data_model.hpp"
#include "unirex/encoder.hpp"
#include "unirex/errors.hpp"
#include "unirex/evaluation.hpp"
#include "unirex/extractors.hpp"
#include "unirex/metrics.hpp"
#include "unirex/objectives.hpp"
#include "unirex/random.hpp"
#include "unirex/synthetic.hpp"
#include "unirex/trainer.hpp"
