/* Copyright 2026 The TAB Authors. All Rights Reserved.

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


#pragma once

#include "tab/branch/branch.hpp"
#include "tab/ctc/ctc.hpp"
#include "tab/ctc/ctc_oracle.hpp"
#include "tab/diffcore/grad_check.hpp"
#include "tab/diffcore/graph.hpp"
#include "tab/diffcore/ops.hpp"
#include "tab/diffcore/param_set.hpp"
#include "tab/diffcore/tensor.hpp"
#include "tab/evalcli/bleu.hpp"
#include "tab/evalcli/checks.hpp"
#include "tab/evalcli/decode.hpp"
#include "tab/evalcli/experiment.hpp"
#include "tab/kv.hpp"
#include "tab/model/checkpoint.hpp"
#include "tab/model/config.hpp"
#include "tab/model/st_model.hpp"
#include "tab/model/tab_forward.hpp"
#include "tab/objectives/objectives.hpp"
#include "tab/pipeline/optim.hpp"
#include "tab/pipeline/run_record.hpp"
#include "tab/pipeline/train_config.hpp"
#include "tab/pipeline/trainer.hpp"
#include "tab/rng.hpp"
#include "tab/synthdata/corpus.hpp"
#include "tab/synthdata/corpus_io.hpp"
#include "tab/synthdata/vocab.hpp"
