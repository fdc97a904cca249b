/** DOM-free studio controller: maps interactions to debounced render
 * requests and enforces latest-wins display updates via tokens.
 *
 * Every control edit bumps the state and schedules one debounced render.
 * Each issued request carries a monotonically increasing token; a response
 * is shown only if no newer request has been issued since, so a stale
 * response can never overwrite a newer frame.
 */

import { ApiClient } from "./api.js";
import { Clock, debounce, realClock } from "./debounce.js";
import { directionFromWidget } from "./lightWidget.js";
import {
  OutputKind,
  StudioState,
  dragPose,
  initialState,
  renderQuery,
  setGains,
  setLight,
  setOutput,
} from "./state.js";

export interface ViewportSurface {
  /** Called with the PNG bytes of the newest completed render. */
  showImage(bytes: ArrayBuffer, token: number): void;
  /** Service errors surface as dismissible banners. */
  showError(message: string): void;
}

export interface ControllerOptions {
  debounceMs?: number;
  clock?: Clock;
}

export class StudioController {
  state: StudioState = initialState();

  private latestToken = 0;
  private displayedToken = 0;
  private inFlight = 0;
  private lastShown: ArrayBuffer | null = null;
  private readonly scheduleRender: () => void;
  private idleResolvers: (() => void)[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly surface: ViewportSurface,
    opts: ControllerOptions = {},
  ) {
    const ms = opts.debounceMs ?? 150;
    this.scheduleRender = debounce(() => void this.issueRender(), ms,
      opts.clock ?? realClock);
  }

  attachSession(sessionId: string): void {
    this.state = { ...this.state, sessionId };
    this.scheduleRender();
  }

  onPoseDrag(dxFrac: number, dyFrac: number): void {
    this.state = dragPose(this.state, dxFrac, dyFrac);
    this.scheduleRender();
  }

  onLightDrag(u: number, v: number): void {
    this.state = setLight(this.state, {
      kind: "directional",
      dir: directionFromWidget(u, v),
    });
    this.scheduleRender();
  }

  onPresetSelected(name: string): void {
    this.state = setLight(this.state, { kind: "preset", name });
    this.scheduleRender();
  }

  onEnvironmentSelected(id: string): void {
    this.state = setLight(this.state, { kind: "env", id });
    this.scheduleRender();
  }

  onGainsChange(kd: number, ks: readonly number[]): void {
    this.state = setGains(this.state, kd, ks);
    this.scheduleRender();
  }

  onOutputChange(kind: OutputKind): void {
    this.state = setOutput(this.state, kind);
    this.scheduleRender();
  }

  /** Bytes of the image currently displayed (export button). */
  exportCurrent(): ArrayBuffer | null {
    return this.lastShown;
  }

  /** Resolves once no request is in flight and none is pending display. */
  whenIdle(): Promise<void> {
    if (this.inFlight === 0) return Promise.resolve();
    return new Promise((resolve) => this.idleResolvers.push(resolve));
  }

  get currentToken(): number {
    return this.latestToken;
  }

  get shownToken(): number {
    return this.displayedToken;
  }

  private async issueRender(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId) return;
    const token = ++this.latestToken;
    const query = renderQuery(this.state);
    this.inFlight++;
    try {
      const bytes = await this.api.render(sessionId, query);
      // drop stale responses: a newer request was issued meanwhile
      if (token === this.latestToken && token > this.displayedToken) {
        this.displayedToken = token;
        this.lastShown = bytes;
        this.surface.showImage(bytes, token);
      }
    } catch (err) {
      if (token === this.latestToken) {
        this.surface.showError(err instanceof Error ? err.message : String(err));
      }
    } finally {
      this.inFlight--;
      if (this.inFlight === 0) {
        const resolvers = this.idleResolvers;
        this.idleResolvers = [];
        for (const r of resolvers) r();
      }
    }
  }
}
