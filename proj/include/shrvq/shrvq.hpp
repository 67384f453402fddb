#pragma once

#include "shrvq/ast_pm.hpp"
#include "shrvq/autoencoder.hpp"
#include "shrvq/checkpoint.hpp"
#include "shrvq/codebook_tree.hpp"
#include "shrvq/config.hpp"
#include "shrvq/datakit.hpp"
#include "shrvq/image_io.hpp"
#include "shrvq/metrics.hpp"
#include "shrvq/pipeline.hpp"
#include "shrvq/vq_loss.hpp"
