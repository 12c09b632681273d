// Mapping between click coordinates and native frame pixels.
//
// The frame canvas keeps its backing store at the native frame resolution;
// CSS (and page zoom) scale its on-screen box freely. On top of that the
// operator can zoom and pan the frame inside the canvas. Both layers have
// to be undone to turn a pointer event into a frame pixel, and redone to
// place markers back on screen.

export interface RectLike {
  left: number;
  top: number;
  width: number;
  height: number;
}

export interface Size {
  width: number;
  height: number;
}

export interface ViewState {
  zoom: number; // user zoom, 1 = whole frame fits the canvas
  panX: number; // native px of the frame at the canvas origin
  panY: number;
}

export interface Point {
  x: number;
  y: number;
}

export const identityView: ViewState = { zoom: 1, panX: 0, panY: 0 };

/** Pointer event (client coords) to native frame pixel. */
export function displayToNative(
  clientX: number,
  clientY: number,
  rect: RectLike,
  native: Size,
  view: ViewState = identityView,
): Point {
  const cssX = ((clientX - rect.left) * native.width) / rect.width;
  const cssY = ((clientY - rect.top) * native.height) / rect.height;
  return {
    x: cssX / view.zoom + view.panX,
    y: cssY / view.zoom + view.panY,
  };
}

/** Native frame pixel back to client coordinates. */
export function nativeToDisplay(
  point: Point,
  rect: RectLike,
  native: Size,
  view: ViewState = identityView,
): Point {
  const cssX = (point.x - view.panX) * view.zoom;
  const cssY = (point.y - view.panY) * view.zoom;
  return {
    x: (cssX * rect.width) / native.width + rect.left,
    y: (cssY * rect.height) / native.height + rect.top,
  };
}

/** Native pixel to canvas drawing coordinates (backing-store space). */
export function nativeToCanvas(point: Point, view: ViewState = identityView): Point {
  return {
    x: (point.x - view.panX) * view.zoom,
    y: (point.y - view.panY) * view.zoom,
  };
}

/** Zoom about a native-space anchor so that point stays put on screen. */
export function zoomAbout(view: ViewState, anchor: Point, factor: number): ViewState {
  const zoom = Math.min(16, Math.max(0.25, view.zoom * factor));
  const scale = view.zoom / zoom;
  return {
    zoom,
    panX: anchor.x - (anchor.x - view.panX) * scale,
    panY: anchor.y - (anchor.y - view.panY) * scale,
  };
}
