/** Server payload shapes; the UI mirrors them without re-deriving anything. */

export interface TableMetadata {
  name: string;
  headers: string[];
  types: string[];
  missing: number[];
  rows: number;
  cols: number;
  sample: string[][];
  units: (string | null)[];
}

export interface UploadResult {
  table_id: string;
  metadata: TableMetadata;
}

export interface StepAction {
  kind: "code" | "chart" | "final" | "thought";
  code?: string;
  text?: string;
  call?: unknown;
}

export interface ToolResultPayload {
  status: string;
  stdout: string;
  stderr: string;
  artifacts: string[];
}

export interface StepPayload {
  index: number;
  model_output: string;
  action: StepAction;
  tool_result?: ToolResultPayload;
}

export interface FinalPayload {
  text: string;
  kind: string;
  asset: string | null;
}

export type SessionEvent =
  | { id: number; event: "step"; data: StepPayload }
  | {
      id: number;
      event: "final";
      data: { status: string; final: FinalPayload | null };
    };

export type ReasoningMode = "tcot" | "pot" | "icot";
