/** Wire shapes of the gateway's HTTP and WebSocket contract. */

export type TaskName =
  | "Respond"
  | "Speak"
  | "Nlu"
  | "DstCommit"
  | "Search"
  | "BarrierWait";

/** Pipeline lane: A generates and speaks, B understands and searches. */
export type Lane = "A" | "B";

export interface StreamEvent {
  type: string;
  turn_id: number;
  payload: Record<string, unknown>;
}

export interface SpotCard {
  spot_id: string;
  name: string;
  description: string;
  matched: string[];
  score: number;
}

export interface RouteLegView {
  from_name: string;
  to_name: string;
  mode: string;
  duration_min: number;
}

export interface SpanView {
  task: TaskName;
  start: number;
  end: number;
}

export interface TurnTraceView {
  turn_id: number;
  stale: boolean;
  dst_version_used: number;
  spans: SpanView[];
}

/** One turn prepared for rendering: texts plus lane-assigned spans. */
export interface UiTurnView {
  turnId: number;
  userText: string | null;
  systemText: string | null;
  stale: boolean;
  spans: Array<SpanView & { lane: Lane }>;
}

export interface SessionInfo {
  session_id: string;
  phase: string;
}

export interface UtteranceReply {
  turn_id: number;
  reply: string;
  phase: string;
  stale: boolean;
}

export interface StateView {
  session_id: string;
  version: number;
  slots: Record<string, string[]>;
}

export interface TraceResponse {
  session_id: string;
  traces: TurnTraceView[];
  export: string;
}
