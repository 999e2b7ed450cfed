pub mod control;
pub mod ngram;
pub mod report;
pub mod sets;

pub use control::{controllability_report, ContainmentRow, ControlConfig, Evaluator, MatchTable, TargetPlan};
pub use ngram::{bleu2, bleu2_multi, lcs_len, rouge, RougeVariant, BLEU_SMOOTHING};
pub use report::{oracle_row, oracle_table, set_row, set_table, MetricReport, OracleRow, SetRow, SCALE_NOTE};
pub use sets::{corpus_self_bleu, max_and_avg, self_bleu, ListScores, MaxAvg, SelfBleuMode};
