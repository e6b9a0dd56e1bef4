#pragma once

#include "cap/errors.h"
#include "cap/feature_bank.h"
#include "cap/heatmap.h"
#include "cap/model.h"
#include "cap/objective.h"
#include "cap/parallel.h"
#include "cap/scoring.h"
#include "cap/synthetic.h"
#include "cap/trainer.h"
