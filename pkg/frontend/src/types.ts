/** Wire types mirroring the defense service's JSON payloads. */

export interface PerturbCandidate {
  word: string;
  position: number;
  attention_score: number;
  mask_drop: number;
  corpus_freq: number;
  sources: string[];
}

export interface Substitution {
  token: string;
  simi_score: number;
  source: string;
  freq_score: number;
}

export interface DefenseRecord {
  example_id: string;
  text: string;
  adv_pcs: number;
  detected_adversarial: boolean;
  p_cand: PerturbCandidate[];
  replacements: Record<string, Substitution>;
  tf_text: string;
  ground_truth: number | null;
  y_pred: number;
  y_pred_final: number;
  final_confidence: number;
  human: boolean;
  human_msg: string;
  tries_used: number;
  status: string;
  error: string;
  created_at: string;
}

export interface AnalystVerdict {
  label: number;
  note: string;
  analyst: string;
  resolved_at: string;
}

export type QueueStatus = "pending" | "resolved";

export interface QueueItem {
  record_id: string;
  status: QueueStatus;
  record: DefenseRecord;
  verdict: AnalystVerdict | null;
}

export interface Relevance {
  example_id: string;
  tokens: string[];
  a_map: number[];
  i_grad: number[];
}

export interface MetricValue {
  value: number;
  numerator: number;
  denominator: number;
  undefined: boolean;
  excluded: number;
}

export interface ThreatReport {
  window: { from: string | null; to: string | null };
  total_records: number;
  error_records: number;
  detected_adversarial: number;
  detected_clean: number;
  message_histogram: Record<string, number>;
  top_candidate_words: [string, number][];
  top_replacements: [string, number][];
  metrics: {
    acc_all: MetricValue;
    acc_tf: MetricValue;
    transform_error: MetricValue;
    acc_human: MetricValue;
    analyst_corrected_accuracy: MetricValue;
  };
  pending_queue_depth: number;
}
