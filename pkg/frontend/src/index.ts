/**
 * Client bindings for the visaid HTTP service.
 *
 * Exposes the five stateless operations (markup parsing, trace metrics,
 * point accuracy, equidistant resampling, 2D-to-3D lifting) as typed async
 * functions. Values are plain nested objects that mirror the service's
 * JSON payloads losslessly; file ingestion stays on the service side.
 */

export type NormPoint = [number, number];
export type NormBox = [number, number, number, number];
export type Point3 = [number, number, number];

export interface BoxEntity {
  type: "box";
  box: NormBox;
}

export interface PointsEntity {
  type: "points";
  points: NormPoint[];
}

export interface RefEntity {
  type: "ref";
  name: string;
  boxes: NormBox[];
}

export interface PredEntity {
  type: "pred";
  predicate: string;
  boxes: NormBox[];
}

export type Entity = BoxEntity | PointsEntity | RefEntity | PredEntity;

export interface SectionContent {
  text: string;
  entities: Entity[];
}

export interface MarkupDocument {
  description: SectionContent | null;
  reasoning: SectionContent | null;
  answer: SectionContent | null;
}

export interface TraceMetrics {
  mae: number;
  rmse: number;
}

export interface CameraIntrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  depth_scale: number;
}

export interface LiftOptions {
  trace: NormPoint[];
  depths: number[];
  intrinsics: CameraIntrinsics;
  width: number;
  height: number;
  optimize?: boolean;
}

export interface LiftResult {
  points: Point3[];
  initialObjective: number;
  finalObjective: number;
}

/** Malformed markup; byteOffset points at the defect in the input text. */
export class MarkupParseError extends Error {
  readonly byteOffset: number;

  constructor(message: string, byteOffset: number) {
    super(`${message} (byte offset ${byteOffset})`);
    this.name = "MarkupParseError";
    this.byteOffset = byteOffset;
  }
}

/** Any non-parse failure reported by the service. */
export class ServiceError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(`service returned ${status}: ${JSON.stringify(detail)}`);
    this.name = "ServiceError";
    this.status = status;
    this.detail = detail;
  }
}

export interface BindingsOptions {
  /** Per-request timeout in milliseconds (default 30000). */
  timeoutMs?: number;
}

export interface VisaidBindings {
  parseDocument(text: string): Promise<MarkupDocument>;
  traceMetrics(pred: number[][], gt: number[][]): Promise<TraceMetrics>;
  pointAccuracy(points: NormPoint[], box: NormBox): Promise<number>;
  resampleEquidistant(
    points: number[][],
    width: number,
    height: number,
    count?: number,
  ): Promise<NormPoint[]>;
  lift(options: LiftOptions): Promise<LiftResult>;
  health(): Promise<{ status: string; version: string }>;
}

interface ParseErrorDetail {
  message: string;
  offset: number;
}

function isParseErrorDetail(detail: unknown): detail is ParseErrorDetail {
  return (
    typeof detail === "object" &&
    detail !== null &&
    typeof (detail as ParseErrorDetail).message === "string" &&
    typeof (detail as ParseErrorDetail).offset === "number"
  );
}

export function createBindings(baseUrl: string, options: BindingsOptions = {}): VisaidBindings {
  const root = baseUrl.replace(/\/+$/, "");
  const timeoutMs = options.timeoutMs ?? 30_000;

  async function post<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(`${root}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal: AbortSignal.timeout(timeoutMs),
    });
    const payload: unknown = await response.json();
    if (!response.ok) {
      const detail = (payload as { detail?: unknown }).detail ?? payload;
      if (response.status === 400 && isParseErrorDetail(detail)) {
        throw new MarkupParseError(detail.message, detail.offset);
      }
      throw new ServiceError(response.status, detail);
    }
    return payload as T;
  }

  return {
    async parseDocument(text) {
      const { document } = await post<{ document: MarkupDocument }>("/v1/parse", { text });
      return document;
    },

    async traceMetrics(pred, gt) {
      return post<TraceMetrics>("/v1/metrics/trace", { pred, gt });
    },

    async pointAccuracy(points, box) {
      const { accuracy } = await post<{ accuracy: number }>("/v1/metrics/point-accuracy", {
        points,
        box,
      });
      return accuracy;
    },

    async resampleEquidistant(points, width, height, count = 8) {
      const { points: result } = await post<{ points: NormPoint[] }>("/v1/resample", {
        points,
        width,
        height,
        count,
      });
      return result;
    },

    async lift(options) {
      const payload = await post<{
        points: Point3[];
        initial_objective: number;
        final_objective: number;
      }>("/v1/lift", {
        trace: options.trace,
        depths: options.depths,
        intrinsics: options.intrinsics,
        width: options.width,
        height: options.height,
        optimize: options.optimize ?? true,
      });
      return {
        points: payload.points,
        initialObjective: payload.initial_objective,
        finalObjective: payload.final_objective,
      };
    },

    async health() {
      const response = await fetch(`${root}/v1/health`, {
        signal: AbortSignal.timeout(timeoutMs),
      });
      if (!response.ok) {
        throw new ServiceError(response.status, await response.text());
      }
      return (await response.json()) as { status: string; version: string };
    },
  };
}
