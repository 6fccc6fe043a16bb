#pragma once

#include "sfda/ftsp.hpp"
#include "sfda/pipeline.hpp"

#include <json.hpp>

#include <string>

namespace sfda {

using Json = nlohmann::ordered_json;

Json to_json(const SynthShiftConfig& cfg);
Json to_json(const SourceTrainConfig& cfg);
Json to_json(const FtspConfig& cfg);
Json to_json(const TsalConfig& cfg);
Json to_json(const AdaptConfig& cfg);

Json to_json(const SourceReport& report);
Json to_json(const RunReport& report);
Json to_json(const EvalMetrics& metrics);
Json to_json(const PseudoLabelMetrics& metrics);

/// `epoch,mean_dis,mean_div,pl_acc,target_acc,trusted_prec`
std::string run_report_csv(const RunReport& report);

/// `epoch,tau_dis,tau_div` for every epoch of the schedule.
std::string schedule_csv(const TsalConfig& cfg);

} // namespace sfda
