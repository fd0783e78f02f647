#pragma once

#include "seqval/acquisition.hpp"
#include "seqval/alphabet.hpp"
#include "seqval/checkpoint.hpp"
#include "seqval/config.hpp"
#include "seqval/dataset.hpp"
#include "seqval/digest.hpp"
#include "seqval/error.hpp"
#include "seqval/learning.hpp"
#include "seqval/lstm.hpp"
#include "seqval/prefix.hpp"
#include "seqval/pyexpr.hpp"
#include "seqval/rng.hpp"
#include "seqval/sampling.hpp"
#include "seqval/smiles.hpp"
#include "seqval/train.hpp"
#include "seqval/verdict.hpp"
