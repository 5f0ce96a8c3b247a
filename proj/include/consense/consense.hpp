#pragma once

#include "consense/config.hpp"
#include "consense/consensus.hpp"
#include "consense/detection.hpp"
#include "consense/error.hpp"
#include "consense/experiments.hpp"
#include "consense/format.hpp"
#include "consense/graph.hpp"
#include "consense/random.hpp"
#include "consense/sensing.hpp"
#include "consense/spectral.hpp"
