from .metrics import (flops_estimate, mean_sum_se, mlp_flops, overhead_report, pilots, rate_per_ue,
                      sum_se)

__all__ = ["flops_estimate", "mean_sum_se", "mlp_flops", "overhead_report", "pilots", "rate_per_ue",
           "sum_se"]
